#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mixinfer/error.hpp"

namespace mixinfer {

using ConfigTree = boost::property_tree::ptree;

inline ConfigTree read_config_file(const std::filesystem::path& path) {
  ConfigTree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  return tree;
}

inline ConfigTree parse_config_text(const std::string& text) {
  ConfigTree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  return tree;
}

inline std::string config_to_text(const ConfigTree& tree) {
  std::ostringstream os;
  boost::property_tree::write_ini(os, tree);
  return os.str();
}

/// Reads `key` from `section`, leaving `value` untouched when absent.
template <typename T>
void read_key(const ConfigTree& tree, const std::string& section, const std::string& key, T& value) {
  auto sec = tree.get_child_optional(section);
  if (!sec) return;
  auto v = sec->get_optional<std::string>(key);
  if (!v) return;
  std::istringstream is(*v);
  T parsed{};
  if constexpr (std::is_same_v<T, bool>) {
    std::string s;
    is >> s;
    if (s == "true" || s == "1" || s == "yes")
      parsed = true;
    else if (s == "false" || s == "0" || s == "no")
      parsed = false;
    else
      throw ConfigError(section + "." + key + ": expected a boolean, got '" + *v + "'");
  } else if constexpr (std::is_same_v<T, std::string>) {
    parsed = *v;
  } else {
    if (!(is >> parsed)) throw ConfigError(section + "." + key + ": cannot parse '" + *v + "'");
  }
  value = parsed;
}

template <typename T>
void read_list(const ConfigTree& tree, const std::string& section, const std::string& key, std::vector<T>& value) {
  auto sec = tree.get_child_optional(section);
  if (!sec) return;
  auto v = sec->get_optional<std::string>(key);
  if (!v) return;
  std::istringstream is(*v);
  std::vector<T> out;
  T item{};
  while (is >> item) out.push_back(item);
  if (!is.eof()) throw ConfigError(section + "." + key + ": cannot parse list '" + *v + "'");
  value = std::move(out);
}

template <typename T>
void write_key(ConfigTree& tree, const std::string& section, const std::string& key, const T& value) {
  std::ostringstream os;
  os.precision(17);
  os << value;
  tree.put(ConfigTree::path_type(section + "/" + key, '/'), os.str());
}

template <typename T>
void write_list(ConfigTree& tree, const std::string& section, const std::string& key, const std::vector<T>& value) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < value.size(); ++i) os << (i ? " " : "") << value[i];
  tree.put(ConfigTree::path_type(section + "/" + key, '/'), os.str());
}

}  // namespace mixinfer
