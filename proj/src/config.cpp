#include "oplm/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

namespace oplm {

std::string to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::PlainLstm: return "plain_lstm";
    case LearnerKind::OpLstm: return "op_lstm";
    case LearnerKind::Maml: return "maml";
    case LearnerKind::ProtoNet: return "protonet";
  }
  return "?";
}

std::string to_string(TaskSource s) {
  switch (s) {
    case TaskSource::Sine: return "sine";
    case TaskSource::Synthetic: return "synthetic";
    case TaskSource::Images: return "images";
  }
  return "?";
}

LearnerKind parse_learner_kind(const std::string& s) {
  for (auto k : {LearnerKind::PlainLstm, LearnerKind::OpLstm, LearnerKind::Maml, LearnerKind::ProtoNet}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown learner: " + s);
}

TaskSource parse_task_source(const std::string& s) {
  for (auto t : {TaskSource::Sine, TaskSource::Synthetic, TaskSource::Images}) {
    if (to_string(t) == s) return t;
  }
  throw ConfigError("unknown task source: " + s);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) out.push_back(trim(part));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long n = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    n = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(n);
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  for (const auto& part : split(v, ',')) out.push_back(parse_count(key, part));
  return out;
}

std::string real_text(double d) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << d;
  return os.str();
}

std::string list_text(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  const char* key;
  bool model;  // part of the checkpoint compatibility hash
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define COUNT_FIELD(name, model) \
  Field{#name, model, [](RunConfig& c, const std::string& v) { c.name = parse_count(#name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.name); }}
#define REAL_FIELD(name, model) \
  Field{#name, model, [](RunConfig& c, const std::string& v) { c.name = parse_real(#name, v); }, \
        [](const RunConfig& c) { return real_text(c.name); }}
#define BOOL_FIELD(name, model) \
  Field{#name, model, [](RunConfig& c, const std::string& v) { c.name = parse_bool(#name, v); }, \
        [](const RunConfig& c) { return std::string(c.name ? "true" : "false"); }}
#define LIST_FIELD(name, model) \
  Field{#name, model, [](RunConfig& c, const std::string& v) { c.name = parse_list(#name, v); }, \
        [](const RunConfig& c) { return list_text(c.name); }}
#define TEXT_FIELD(name, model) \
  Field{#name, model, [](RunConfig& c, const std::string& v) { c.name = v; }, \
        [](const RunConfig& c) { return c.name; }}
#define ENUM_FIELD(name, model, parser) \
  Field{#name, model, [](RunConfig& c, const std::string& v) { c.name = parser(v); }, \
        [](const RunConfig& c) { return to_string(c.name); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      ENUM_FIELD(learner, true, parse_learner_kind),
      ENUM_FIELD(task, true, parse_task_source),
      COUNT_FIELD(n_way, true),
      COUNT_FIELD(k_shot, false),
      COUNT_FIELD(q_query, false),
      COUNT_FIELD(synthetic_dim, true),
      REAL_FIELD(synthetic_spread, false),
      TEXT_FIELD(image_root, false),
      REAL_FIELD(train_fraction, false),
      REAL_FIELD(val_fraction, false),
      COUNT_FIELD(meta_batch, false),
      COUNT_FIELD(meta_iterations, false),
      COUNT_FIELD(val_every, false),
      COUNT_FIELD(val_tasks, false),
      COUNT_FIELD(test_tasks, false),
      REAL_FIELD(outer_lr, false),
      Field{"seed", false, [](RunConfig& c, const std::string& v) { c.seed = parse_count("seed", v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      TEXT_FIELD(out_dir, false),
      COUNT_FIELD(threads, false),
      LIST_FIELD(lstm_hidden, true),
      Field{"input_format", true,
            [](RunConfig& c, const std::string& v) {
              if (v == "auto") c.input_format.reset();
              else c.input_format = parse_input_format(v);
            },
            [](const RunConfig& c) { return c.input_format ? to_string(*c.input_format) : std::string("auto"); }},
      ENUM_FIELD(ingestion, true, parse_ingestion),
      COUNT_FIELD(lstm_unroll, true),
      LIST_FIELD(hidden, true),
      LIST_FIELD(coord_widths, true),
      COUNT_FIELD(unroll, true),
      REAL_FIELD(gamma, false),
      BOOL_FIELD(learn_gamma, true),
      ENUM_FIELD(update_order, true, parse_hidden_update_order),
      COUNT_FIELD(inner_steps, true),
      REAL_FIELD(inner_lr, true),
      BOOL_FIELD(first_order, true),
  };
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.key) return f;
  }
  throw ConfigError("unknown config key: " + key);
}

/// (key, raw value) pairs in file order.
std::vector<std::pair<std::string, std::string>> parse_lines(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

}  // namespace

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  field(key).set(config, value);
}

void RunConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be >= 1");
  };
  positive(k_shot, "k_shot");
  positive(q_query, "q_query");
  positive(meta_batch, "meta_batch");
  positive(meta_iterations, "meta_iterations");
  positive(val_every, "val_every");
  positive(val_tasks, "val_tasks");
  positive(test_tasks, "test_tasks");
  positive(threads, "threads");
  positive(lstm_unroll, "lstm_unroll");
  positive(unroll, "unroll");
  if (val_every > meta_iterations) throw ConfigError("val_every must not exceed meta_iterations");
  if (task != TaskSource::Sine && n_way < 2) throw ConfigError("classification needs n_way >= 2");
  if (task == TaskSource::Synthetic) positive(synthetic_dim, "synthetic_dim");
  if (task == TaskSource::Images && image_root.empty()) throw ConfigError("image tasks need image_root");
  if (!(outer_lr >= 0.0)) throw ConfigError("outer_lr must be >= 0");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be > 0");
  if (!(inner_lr >= 0.0)) throw ConfigError("inner_lr must be >= 0");
  if (!(train_fraction > 0.0 && val_fraction > 0.0 && train_fraction + val_fraction < 1.0)) {
    throw ConfigError("train_fraction and val_fraction must be positive and sum below 1");
  }
  if (learner == LearnerKind::ProtoNet && task == TaskSource::Sine) {
    throw ConfigError("protonet needs a classification task");
  }
  if (learner == LearnerKind::PlainLstm && lstm_hidden.empty()) throw ConfigError("lstm_hidden is empty");
  if (coord_widths.empty() || coord_widths.back() != 1) throw ConfigError("coord_widths must end in 1");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  for (const auto& [k, v] : parse_lines(text)) set_config_value(c, k, v);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_text(const RunConfig& config) {
  std::string s;
  for (const auto& f : fields()) s += std::string(f.key) + " = " + f.get(config) + "\n";
  return s;
}

std::uint64_t config_hash(const RunConfig& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& f : fields()) {
    if (!f.model) continue;
    for (unsigned char ch : std::string(f.key) + "=" + f.get(config) + "\n") {
      h ^= ch;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::vector<std::pair<std::string, RunConfig>> expand_grid(const std::string& text) {
  const auto lines = parse_lines(text);
  RunConfig base;
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& [k, v] : lines) {
    if (v.find('|') == std::string::npos) {
      set_config_value(base, k, v);
    } else {
      field(k);  // reject unknown keys early
      axes.emplace_back(k, split(v, '|'));
    }
  }
  std::vector<std::pair<std::string, RunConfig>> out;
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    RunConfig c = base;
    std::string label;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const std::string& v = axes[a].second[idx[a]];
      set_config_value(c, axes[a].first, v);
      std::string token = axes[a].first + "=" + v;
      std::replace_if(token.begin(), token.end(), [](char ch) { return ch == '/' || ch == ' ' || ch == ','; }, '_');
      label += (label.empty() ? "" : "__") + token;
    }
    if (label.empty()) label = "run";
    c.out_dir = base.out_dir + "/" + label;
    c.validate();
    out.emplace_back(label, std::move(c));
    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++idx[a] < axes[a].second.size()) break;
      idx[a] = 0;
    }
    if (a == axes.size()) break;
  }
  return out;
}

}  // namespace oplm
