#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <string>

#include "sdvit/errors.hpp"

namespace sdvit::cli {

inline bool is_flag(const CLI::Option* opt) { return opt->get_expected_min() == 0; }

// Fills options not given on the command line from a flat JSON object of
// option values (strings, numbers or booleans). A run manifest works too: its
// "config" object is used.
inline void apply_json_config(CLI::App* app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw InvalidArgument("config " + path + " must be a JSON object");
  if (j.contains("config") && j["config"].is_object()) j = j["config"];
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "config") continue;
    CLI::Option* opt = app->get_option_no_throw("--" + it.key());
    if (!opt) throw InvalidArgument("config " + path + ": unknown option '" + it.key() + "'");
    if (opt->count() > 0) continue;  // the command line wins
    const nlohmann::json& v = *it;
    std::string text;
    if (v.is_string()) text = v.get<std::string>();
    else if (v.is_boolean()) text = v.get<bool>() ? "true" : "false";
    else if (v.is_number()) text = v.dump();
    else throw InvalidArgument("config value for '" + it.key() + "' must be a string, number or boolean");
    if (text.empty() && !is_flag(opt)) continue;
    if (is_flag(opt) && text != "true") continue;
    opt->add_result(text);
    opt->run_callback();
  }
}

// Every long option with its effective value.
inline nlohmann::json snapshot(const CLI::App* app) {
  nlohmann::json j = nlohmann::json::object();
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    if (is_flag(opt)) j[name] = opt->count() > 0 && opt->as<bool>();
    else if (opt->count() > 0) j[name] = opt->results().back();
    else j[name] = opt->get_default_str();
  }
  return j;
}

}  // namespace sdvit::cli
