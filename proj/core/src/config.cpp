// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rqsep/error.hpp"

namespace rqsep::train {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format(int v) { return std::to_string(v); }
std::string format(std::uint64_t v) { return std::to_string(v); }
std::string format(bool v) { return v ? "true" : "false"; }
std::string format(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string format(const std::string& v) { return v; }
template <class T>
std::string format(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format(v[i]);
  return out;
}

[[noreturn]] void bad_value(const std::string& field, const std::string& text, const char* type) {
  fail(ErrorKind::kConfig, field + ": cannot parse '" + text + "' as " + type);
}

template <class T>
T parse_number(const std::string& field, const std::string& text, const char* type) {
  T v{};
  const std::string t = trim(text);
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) bad_value(field, text, type);
  return v;
}

void parse(const std::string& f, const std::string& s, int& v) { v = parse_number<int>(f, s, "an integer"); }
void parse(const std::string& f, const std::string& s, std::uint64_t& v) {
  v = parse_number<std::uint64_t>(f, s, "an unsigned integer");
}
void parse(const std::string& f, const std::string& s, double& v) { v = parse_number<double>(f, s, "a number"); }
void parse(const std::string& f, const std::string& s, bool& v) {
  const std::string t = trim(s);
  if (t == "true" || t == "on" || t == "1" || t == "yes") {
    v = true;
  } else if (t == "false" || t == "off" || t == "0" || t == "no") {
    v = false;
  } else {
    bad_value(f, s, "a boolean");
  }
}
void parse(const std::string&, const std::string& s, std::string& v) { v = trim(s); }
template <class T>
void parse(const std::string& f, const std::string& s, std::vector<T>& v) {
  std::vector<T> out;
  for (const auto& item : split_list(s)) {
    T x{};
    parse(f, item, x);
    out.push_back(x);
  }
  v = std::move(out);
}

// Calls f(section, key, field) for every configurable field, in schema order.
template <class C, class F>
void visit(C& c, F&& f) {
  f("codec", "strides", c.codec.strides);
  f("codec", "kernels", c.codec.kernels);
  f("codec", "base_channels", c.codec.base_channels);
  f("codec", "latent_channels", c.codec.latent_channels);
  f("codec", "lstm_layers", c.codec.lstm_layers);
  f("codec", "n_sources", c.codec.n_sources);
  f("codec", "sample_rate", c.codec.sample_rate);
  f("codec", "context_seconds", c.codec.context_seconds);
  f("codec", "use_skips", c.codec.use_skips);

  f("rvq", "depth", c.rvq.depth);
  f("rvq", "codebook_size", c.rvq.codebook_size);
  f("rvq", "decay", c.rvq.decay);
  f("rvq", "reinit_threshold", c.rvq.reinit_threshold);
  f("rvq", "beta", c.rvq.beta);
  f("rvq", "commitment_third_term", c.rvq.commitment_third_term);
  f("rvq", "kmeans_iters", c.rvq.kmeans_iters);

  f("loss", "w_spec", c.loss.w_spec);
  f("loss", "w_rec", c.loss.w_rec);
  f("loss", "w_comm", c.loss.w_comm);
  f("loss", "alpha", c.loss.alpha);
  f("loss", "spectral_scales", c.loss.spectral_scales);

  f("train", "batch_size", c.train.batch_size);
  f("train", "learning_rate", c.train.learning_rate);
  f("train", "max_steps", c.train.max_steps);
  f("train", "checkpoint_every", c.train.checkpoint_every);
  f("train", "log_every", c.train.log_every);
  f("train", "seed", c.train.seed);
  f("train", "grad_clip", c.train.grad_clip);
  f("train", "warmup_steps", c.train.warmup_steps);
  f("train", "final_lr_scale", c.train.final_lr_scale);
  f("train", "val_chunks", c.train.val_chunks);

  f("lm", "n_cb", c.lm.n_cb);
  f("lm", "q_depth", c.lm.q_depth);
  f("lm", "model_dim", c.lm.model_dim);
  f("lm", "spatial_layers", c.lm.spatial_layers);
  f("lm", "depth_layers", c.lm.depth_layers);
  f("lm", "heads", c.lm.heads);
  f("lm", "max_positions", c.lm.max_positions);
  f("lm", "temperature", c.lm.temperature);
  f("lm", "top_k", c.lm.top_k);

  f("lm_train", "batch_size", c.lm_train.batch_size);
  f("lm_train", "learning_rate", c.lm_train.learning_rate);
  f("lm_train", "max_steps", c.lm_train.max_steps);
  f("lm_train", "checkpoint_every", c.lm_train.checkpoint_every);
  f("lm_train", "log_every", c.lm_train.log_every);
  f("lm_train", "chunk_hop_seconds", c.lm_train.chunk_hop_seconds);

  f("data", "stems", c.data.stems);
  f("data", "peak", c.data.peak);

  f("eval", "chunk_seconds", c.eval.chunk_seconds);
  f("eval", "hop_seconds", c.eval.hop_seconds);
  f("eval", "activity_threshold", c.eval.activity_threshold);
  f("eval", "min_active", c.eval.min_active);
}

std::vector<std::string> section_order() {
  std::vector<std::string> out;
  Config c;
  visit(c, [&out](const char* section, const char*, auto&) {
    if (out.empty() || out.back() != section) out.push_back(section);
  });
  return out;
}

}  // namespace

void Config::validate() const {
  codec.validate();
  lm.validate();
  auto bad = [](const std::string& field, const std::string& why) { fail(ErrorKind::kConfig, field + ": " + why); };
  if (rvq.depth < 1) bad("rvq.depth", "must be positive");
  if (rvq.codebook_size < 1 || rvq.codebook_size > 65536) bad("rvq.codebook_size", "must be in [1, 65536]");
  if (!(rvq.decay > 0.0 && rvq.decay < 1.0)) bad("rvq.decay", "must lie strictly between 0 and 1");
  if (rvq.reinit_threshold < 0.0) bad("rvq.reinit_threshold", "must be non-negative");
  if (rvq.beta < 0.0) bad("rvq.beta", "must be non-negative");
  if (rvq.kmeans_iters < 0) bad("rvq.kmeans_iters", "must be non-negative");
  if (loss.spectral_scales.empty()) bad("loss.spectral_scales", "needs at least one scale");
  for (int s : loss.spectral_scales) {
    if (s < 4 || s % 4 != 0) bad("loss.spectral_scales", "scales must be positive multiples of 4");
    if (loss.w_spec != 0.0 && s > codec.context_samples()) {
      bad("loss.spectral_scales", "scale " + std::to_string(s) + " exceeds the training context");
    }
  }
  if (train.batch_size < 1) bad("train.batch_size", "must be at least 1");
  if (!(train.learning_rate > 0.0)) bad("train.learning_rate", "must be positive");
  if (train.max_steps < 0) bad("train.max_steps", "must be non-negative");
  if (train.checkpoint_every < 1) bad("train.checkpoint_every", "must be positive");
  if (train.log_every < 1) bad("train.log_every", "must be positive");
  if (train.warmup_steps < 0) bad("train.warmup_steps", "must be non-negative");
  if (train.final_lr_scale < 0.0) bad("train.final_lr_scale", "must be non-negative");
  if (train.val_chunks < 0) bad("train.val_chunks", "must be non-negative");
  if (lm_train.batch_size < 1) bad("lm_train.batch_size", "must be at least 1");
  if (!(lm_train.learning_rate > 0.0)) bad("lm_train.learning_rate", "must be positive");
  if (lm_train.max_steps < 0) bad("lm_train.max_steps", "must be non-negative");
  if (lm_train.checkpoint_every < 1) bad("lm_train.checkpoint_every", "must be positive");
  if (lm_train.log_every < 1) bad("lm_train.log_every", "must be positive");
  if (!(lm_train.chunk_hop_seconds > 0.0)) bad("lm_train.chunk_hop_seconds", "must be positive");
  if (static_cast<int>(data.stems.size()) != codec.n_sources) {
    bad("data.stems", "lists " + std::to_string(data.stems.size()) + " stems but codec.n_sources is " +
                          std::to_string(codec.n_sources));
  }
  if (!(data.peak > 0.0 && data.peak <= 1.0)) bad("data.peak", "must be in (0, 1]");
  if (!(eval.chunk_seconds > 0.0)) bad("eval.chunk_seconds", "must be positive");
  if (!(eval.hop_seconds > 0.0)) bad("eval.hop_seconds", "must be positive");
  if (eval.min_active < 0) bad("eval.min_active", "must be non-negative");
}

Config parse_config(const std::string& text) {
  Config c;
  std::string section;
  std::set<std::string> seen;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorKind::kConfig, "line " + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      const auto order = section_order();
      if (std::find(order.begin(), order.end(), section) == order.end()) {
        fail(ErrorKind::kConfig, "line " + std::to_string(line_no) + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::kConfig, "line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty()) fail(ErrorKind::kConfig, "line " + std::to_string(line_no) + ": key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string name = section + "." + key;
    if (!seen.insert(name).second) fail(ErrorKind::kConfig, "line " + std::to_string(line_no) + ": duplicate key " + name);
    set_field(c, name, trim(line.substr(eq + 1)));
  }
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_ini(const Config& config, const std::vector<std::string>& sections) {
  std::ostringstream out;
  std::string current;
  visit(config, [&](const char* section, const char* key, const auto& value) {
    if (std::find(sections.begin(), sections.end(), section) == sections.end()) return;
    if (current != section) {
      if (!current.empty()) out << '\n';
      out << '[' << section << "]\n";
      current = section;
    }
    out << key << " = " << format(value) << '\n';
  });
  return out.str();
}

std::string to_ini(const Config& config) { return to_ini(config, section_order()); }

void set_field(Config& config, const std::string& key, const std::string& value) {
  const bool qualified = key.find('.') != std::string::npos;
  std::vector<std::string> matches;
  visit(config, [&](const char* section, const char* name, auto&) {
    const std::string full = std::string(section) + "." + name;
    if (qualified ? full == key : key == name) matches.push_back(full);
  });
  if (matches.empty()) fail(ErrorKind::kConfig, "unknown config key '" + key + "'");
  if (matches.size() > 1) {
    std::string list;
    for (const auto& m : matches) list += (list.empty() ? "" : ", ") + m;
    fail(ErrorKind::kConfig, "ambiguous config key '" + key + "'; use one of " + list);
  }
  visit(config, [&](const char* section, const char* name, auto& field) {
    const std::string full = std::string(section) + "." + name;
    if (full == matches.front()) parse(full, value, field);
  });
}

std::vector<std::string> field_names() {
  std::vector<std::string> out;
  Config c;
  visit(c, [&out](const char* section, const char* key, auto&) { out.push_back(std::string(section) + "." + key); });
  return out;
}

void require_same(const Config& expected, const Config& actual, const std::vector<std::string>& sections,
                  const std::string& context) {
  std::map<std::string, std::string> want;
  visit(expected, [&](const char* section, const char* key, const auto& value) {
    want[std::string(section) + "." + key] = format(value);
  });
  visit(actual, [&](const char* section, const char* key, const auto& value) {
    if (std::find(sections.begin(), sections.end(), section) == sections.end()) return;
    const std::string name = std::string(section) + "." + key;
    const std::string got = format(value);
    if (want[name] != got) {
      fail(ErrorKind::kConfig, context + ": config mismatch in " + name + " (expected " + want[name] + ", found " + got + ")");
    }
  });
}

}  // namespace rqsep::train
