#include "ntkdfl/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ntkdfl/error.hpp"

namespace ntkdfl {

using json = nlohmann::json;

namespace {

[[noreturn]] void field_error(const std::string& path, const std::string& msg) {
  fail(ErrorCode::Config, path + ": " + msg);
}

void check(bool cond, const std::string& path, const std::string& msg) {
  if (!cond) field_error(path, msg);
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    check(obj_.is_object(), path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }
  std::string path(const std::string& key) const { return join(path_, key); }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  template <class F>
  void with(const std::string& key, F&& f) {
    if (const json* v = get(key)) f(*v, path(key));
  }

  void read(const std::string& key, double& out) {
    with(key, [&](const json& v, const std::string& p) {
      check(v.is_number(), p, "expected a number");
      out = v.get<double>();
      check(std::isfinite(out), p, "must be finite");
    });
  }

  void read(const std::string& key, std::size_t& out) {
    with(key, [&](const json& v, const std::string& p) {
      check(v.is_number_integer() && v.get<long long>() >= 0, p,
            "expected a nonnegative integer");
      out = v.get<std::size_t>();
    });
  }

  void read(const std::string& key, bool& out) {
    with(key, [&](const json& v, const std::string& p) {
      check(v.is_boolean(), p, "expected true or false");
      out = v.get<bool>();
    });
  }

  void read(const std::string& key, std::string& out) {
    with(key, [&](const json& v, const std::string& p) {
      check(v.is_string(), p, "expected a string");
      out = v.get<std::string>();
    });
  }

  void finish() const {
    for (const auto& [key, _] : obj_.items())
      if (!seen_.count(key)) field_error(path(key), "unknown key");
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Enum>
Enum parse_enum(const json& v, const std::string& path,
                std::initializer_list<std::pair<const char*, Enum>> options) {
  check(v.is_string(), path, "expected a string");
  const auto s = v.get<std::string>();
  std::string allowed;
  for (const auto& [name, value] : options) {
    if (s == name) return value;
    allowed += allowed.empty() ? name : std::string(", ") + name;
  }
  field_error(path, "unknown value '" + s + "' (expected one of: " + allowed + ")");
}

std::string default_root() {
  const char* env = std::getenv(kDataRootEnv);
  return env && *env ? std::string(env) : std::string(".");
}

SgdConfig sgd_defaults(Algorithm a) {
  switch (a) {
    case Algorithm::Dpsgd: return SgdConfig::dpsgd();
    case Algorithm::Dfedavgm: return SgdConfig::dfedavgm();
    default: return SgdConfig::dfedavg();
  }
}

std::string topology_kind_name(TopologyKind k) { return to_string(k); }

}  // namespace

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::NtkDfl: return "ntk_dfl";
    case Algorithm::Dpsgd: return "dpsgd";
    case Algorithm::Dfedavg: return "dfedavg";
    case Algorithm::Dfedavgm: return "dfedavgm";
  }
  return "ntk_dfl";
}

std::string to_string(DatasetName d) {
  return d == DatasetName::Mnist ? "mnist" : "fashion_mnist";
}

std::filesystem::path DatasetConfig::resolve(const std::string& file) const {
  std::filesystem::path p(file);
  return p.is_absolute() ? p : std::filesystem::path(root) / p;
}

void RunConfig::validate() const {
  check(num_clients >= 1, "num_clients", "must be >= 1");
  check(heterogeneity.iid || heterogeneity.alpha > 0.0, "heterogeneity.alpha", "must be > 0");
  check(dataset.downsample >= 1, "dataset.downsample", "must be >= 1");
  check(28 % dataset.downsample == 0, "dataset.downsample", "must divide the 28-pixel image side");
  check(hidden >= 1, "model.hidden", "must be >= 1");
  check(eta > 0.0, "ntk.eta", "must be > 0");
  check(!t_grid.empty(), "ntk.t_grid", "must not be empty");
  check(std::is_sorted(t_grid.begin(), t_grid.end()) &&
            std::adjacent_find(t_grid.begin(), t_grid.end()) == t_grid.end(),
        "ntk.t_grid", "must be strictly ascending");
  check(t_grid.front() >= 0, "ntk.t_grid", "timesteps must be nonnegative");
  check(jacobian_batches >= 1, "ntk.jacobian_batches", "must be >= 1");
  check(sgd.lr >= 0.0, "sgd.lr", "must be >= 0");
  check(sgd.batch_size >= 1, "sgd.batch_size", "must be >= 1");
  check(sgd.momentum >= 0.0 && sgd.momentum < 1.0, "sgd.momentum", "must lie in [0, 1)");
  check(validation_ratio > 0.0 && validation_ratio < 1.0, "selection.validation_ratio",
        "must lie in (0, 1)");
  check(opt_in <= num_clients, "selection.opt_in", "cannot exceed num_clients");
  check(!seeds.empty(), "seeds", "must not be empty");
  check(bytes_per_scalar >= 1, "bytes_per_scalar", "must be >= 1");

  switch (topology.kind) {
    case TopologyKind::Regular:
      check(topology.kappa > 0 && topology.kappa < num_clients, "topology.kappa",
            "must satisfy 0 < kappa < num_clients");
      check((topology.kappa * num_clients) % 2 == 0, "topology.kappa",
            "kappa * num_clients must be even");
      break;
    case TopologyKind::Ring:
      check(num_clients >= 3, "topology.kind", "ring needs at least 3 clients");
      break;
    case TopologyKind::ErdosRenyi:
      check(num_clients >= 2 && topology.mean_degree > 0.0 &&
                topology.mean_degree <= static_cast<double>(num_clients - 1),
            "topology.mean_degree", "must lie in (0, num_clients - 1]");
      break;
    default:
      break;
  }
}

RunConfig parse_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // byte is 1-based and points just past the failure
    std::size_t line = 1, col = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string detail = e.what();
    if (auto at = detail.find("parse error"); at != std::string::npos) detail = detail.substr(at);
    fail(ErrorCode::Config,
         "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + detail);
  }

  RunConfig cfg;
  cfg.dataset.root = default_root();
  ObjectReader root(doc, "");

  root.with("dataset", [&](const json& v, const std::string& p) {
    ObjectReader r(v, p);
    r.with("name", [&](const json& n, const std::string& np) {
      cfg.dataset.name = parse_enum<DatasetName>(
          n, np, {{"mnist", DatasetName::Mnist}, {"fashion_mnist", DatasetName::FashionMnist}});
    });
    r.read("root", cfg.dataset.root);
    r.read("train_images", cfg.dataset.train_images);
    r.read("train_labels", cfg.dataset.train_labels);
    r.read("test_images", cfg.dataset.test_images);
    r.read("test_labels", cfg.dataset.test_labels);
    r.read("downsample", cfg.dataset.downsample);
    r.read("max_train", cfg.dataset.max_train);
    r.read("max_test", cfg.dataset.max_test);
    r.finish();
  });

  root.read("num_clients", cfg.num_clients);

  root.with("heterogeneity", [&](const json& v, const std::string& p) {
    ObjectReader r(v, p);
    r.with("kind", [&](const json& k, const std::string& kp) {
      cfg.heterogeneity.iid = parse_enum<bool>(k, kp, {{"iid", true}, {"dirichlet", false}});
    });
    r.read("alpha", cfg.heterogeneity.alpha);
    r.finish();
  });

  root.with("topology", [&](const json& v, const std::string& p) {
    ObjectReader r(v, p);
    r.with("kind", [&](const json& k, const std::string& kp) {
      cfg.topology.kind = parse_enum<TopologyKind>(k, kp,
                                                   {{"regular", TopologyKind::Regular},
                                                    {"ring", TopologyKind::Ring},
                                                    {"erdos_renyi", TopologyKind::ErdosRenyi},
                                                    {"complete", TopologyKind::Complete}});
    });
    r.read("kappa", cfg.topology.kappa);
    r.read("mean_degree", cfg.topology.mean_degree);
    r.with("mode", [&](const json& m, const std::string& mp) {
      cfg.topology.dynamic = parse_enum<bool>(m, mp, {{"dynamic", true}, {"static", false}});
    });
    r.finish();
  });

  root.with("algorithm", [&](const json& v, const std::string& p) {
    cfg.algorithm = parse_enum<Algorithm>(v, p,
                                          {{"ntk_dfl", Algorithm::NtkDfl},
                                           {"dpsgd", Algorithm::Dpsgd},
                                           {"dfedavg", Algorithm::Dfedavg},
                                           {"dfedavgm", Algorithm::Dfedavgm}});
  });
  cfg.sgd = sgd_defaults(cfg.algorithm);

  root.read("rounds", cfg.rounds);

  root.with("model", [&](const json& v, const std::string& p) {
    ObjectReader r(v, p);
    r.read("hidden", cfg.hidden);
    r.finish();
  });

  root.with("ntk", [&](const json& v, const std::string& p) {
    ObjectReader r(v, p);
    r.read("eta", cfg.eta);
    r.with("t_grid", [&](const json& g, const std::string& gp) {
      check(g.is_array(), gp, "expected an array of integers");
      cfg.t_grid.clear();
      for (const auto& t : g) {
        check(t.is_number_integer(), gp, "expected an array of integers");
        cfg.t_grid.push_back(t.get<long>());
      }
    });
    r.read("jacobian_batches", cfg.jacobian_batches);
    r.read("per_round_averaging", cfg.per_round_averaging);
    r.finish();
  });

  root.with("sgd", [&](const json& v, const std::string& p) {
    ObjectReader r(v, p);
    r.read("lr", cfg.sgd.lr);
    r.read("batch_size", cfg.sgd.batch_size);
    r.read("local_epochs", cfg.sgd.local_epochs);
    r.read("momentum", cfg.sgd.momentum);
    r.finish();
  });

  root.with("init", [&](const json& v, const std::string& p) {
    cfg.init = parse_enum<InitScheme>(
        v, p, {{"shared", InitScheme::Shared}, {"per_client", InitScheme::PerClient}});
  });

  root.with("selection", [&](const json& v, const std::string& p) {
    ObjectReader r(v, p);
    r.with("criterion", [&](const json& c, const std::string& cp) {
      cfg.selection_criterion =
          parse_enum<SelectionCriterion>(c, cp,
                                         {{"high_to_low", SelectionCriterion::HighToLow},
                                          {"random", SelectionCriterion::Random},
                                          {"low_to_high", SelectionCriterion::LowToHigh}});
    });
    r.read("validation_ratio", cfg.validation_ratio);
    r.read("opt_in", cfg.opt_in);
    r.finish();
  });

  check(!(root.has("seed") && root.has("seeds")), "seeds", "give either 'seed' or 'seeds', not both");
  root.with("seed", [&](const json& v, const std::string& p) {
    check(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0), p,
          "expected a nonnegative integer");
    cfg.seeds = {v.get<std::uint64_t>()};
  });
  root.with("seeds", [&](const json& v, const std::string& p) {
    check(v.is_array() && !v.empty(), p, "expected a nonempty array of integers");
    cfg.seeds.clear();
    for (const auto& s : v) {
      check(s.is_number_unsigned() || (s.is_number_integer() && s.get<long long>() >= 0), p,
            "expected a nonempty array of nonnegative integers");
      cfg.seeds.push_back(s.get<std::uint64_t>());
    }
  });

  root.read("bytes_per_scalar", cfg.bytes_per_scalar);
  root.read("output_dir", cfg.output_dir);
  root.read("dump_edges", cfg.dump_edges);
  root.finish();

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
  json doc;
  doc["dataset"] = {
      {"name", to_string(cfg.dataset.name)},
      {"root", cfg.dataset.root},
      {"train_images", cfg.dataset.train_images},
      {"train_labels", cfg.dataset.train_labels},
      {"test_images", cfg.dataset.test_images},
      {"test_labels", cfg.dataset.test_labels},
      {"downsample", cfg.dataset.downsample},
      {"max_train", cfg.dataset.max_train},
      {"max_test", cfg.dataset.max_test},
  };
  doc["num_clients"] = cfg.num_clients;
  doc["heterogeneity"] = {{"kind", cfg.heterogeneity.iid ? "iid" : "dirichlet"},
                          {"alpha", cfg.heterogeneity.alpha}};
  doc["topology"] = {{"kind", topology_kind_name(cfg.topology.kind)},
                     {"kappa", cfg.topology.kappa},
                     {"mean_degree", cfg.topology.mean_degree},
                     {"mode", cfg.topology.dynamic ? "dynamic" : "static"}};
  doc["algorithm"] = to_string(cfg.algorithm);
  doc["rounds"] = cfg.rounds;
  doc["model"] = {{"hidden", cfg.hidden}};
  doc["ntk"] = {{"eta", cfg.eta},
                {"t_grid", cfg.t_grid},
                {"jacobian_batches", cfg.jacobian_batches},
                {"per_round_averaging", cfg.per_round_averaging}};
  doc["sgd"] = {{"lr", cfg.sgd.lr},
                {"batch_size", cfg.sgd.batch_size},
                {"local_epochs", cfg.sgd.local_epochs},
                {"momentum", cfg.sgd.momentum}};
  doc["init"] = cfg.init == InitScheme::Shared ? "shared" : "per_client";
  doc["selection"] = {{"criterion", to_string(cfg.selection_criterion)},
                      {"validation_ratio", cfg.validation_ratio},
                      {"opt_in", cfg.opt_in}};
  doc["seeds"] = cfg.seeds;
  doc["bytes_per_scalar"] = cfg.bytes_per_scalar;
  doc["output_dir"] = cfg.output_dir;
  doc["dump_edges"] = cfg.dump_edges;
  return doc.dump(2) + "\n";
}

}  // namespace ntkdfl
