#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "nga/action.hpp"
#include "nga/group.hpp"
#include "nga/net.hpp"
#include "nga/train.hpp"

namespace nga {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// ---- groups and actions: {order, labels, cayley, set_size?, perm?} ----

inline json group_to_json(const FiniteGroup& G) {
  return json{{"order", G.order()}, {"labels", G.labels()}, {"cayley", G.cayley_table()}};
}

inline FiniteGroup group_from_json(const json& j) {
  if (!j.contains("cayley")) throw ConfigError("group JSON needs a 'cayley' table");
  std::vector<std::vector<int>> cayley = j.at("cayley").get<std::vector<std::vector<int>>>();
  std::vector<std::string> labels;
  if (j.contains("labels")) labels = j.at("labels").get<std::vector<std::string>>();
  if (j.contains("order") && j.at("order").get<int>() != static_cast<int>(cayley.size()))
    throw ConfigError("group JSON 'order' disagrees with the Cayley table size");
  return make_group(cayley, std::move(labels));
}

inline json action_to_json(const FiniteGAction& A) {
  json j = group_to_json(A.group);
  j["set_size"] = A.set_size;
  j["perm"] = A.perm;
  return j;
}

inline FiniteGAction action_from_json(const json& j) {
  FiniteGroup G = group_from_json(j);
  if (!j.contains("set_size") || !j.contains("perm"))
    throw ConfigError("action JSON needs 'set_size' and 'perm'");
  return make_action(std::move(G), j.at("set_size").get<int>(),
                     j.at("perm").get<std::vector<std::vector<int>>>());
}

// ---- invertible nets ----

inline json mlp_to_json(const Mlp& m) {
  return json{{"widths", m.widths},
              {"activation", "tanh"},
              {"weights", m.weights},
              {"biases", m.biases}};
}

inline Mlp mlp_from_json(const json& j) {
  if (j.value("activation", "tanh") != std::string("tanh"))
    throw ConfigError("unsupported activation '" + j.value("activation", "") + "'");
  Mlp m = Mlp::zeros(j.at("widths").get<std::vector<int>>());
  auto w = j.at("weights").get<std::vector<Vec>>();
  auto b = j.at("biases").get<std::vector<Vec>>();
  if (w.size() != m.weights.size() || b.size() != m.biases.size())
    throw ConfigError("MLP JSON layer count disagrees with widths");
  for (size_t l = 0; l < w.size(); ++l) {
    if (w[l].size() != m.weights[l].size() || b[l].size() != m.biases[l].size())
      throw ConfigError("MLP JSON layer " + std::to_string(l) + " has wrong parameter shape");
    m.weights[l] = std::move(w[l]);
    m.biases[l] = std::move(b[l]);
  }
  return m;
}

inline json net_to_json(const InvertibleNet& net) {
  json layers = json::array();
  for (const Layer& l : net.layers) {
    if (const auto* c = std::get_if<CouplingLayer>(&l)) {
      layers.push_back(json{{"type", "coupling"}, {"conditioner", mlp_to_json(c->conditioner)}});
    } else if (const auto* p = std::get_if<PermutationLayer>(&l)) {
      layers.push_back(json{{"type", "permutation"}, {"perm", p->perm}});
    } else {
      const auto& ln = std::get<LinearLayer>(l);
      layers.push_back(json{{"type", "linear"}, {"matrix", ln.mat}});
    }
  }
  return json{{"dim", net.dim}, {"layers", layers}};
}

inline InvertibleNet net_from_json(const json& j) {
  InvertibleNet net;
  net.dim = j.at("dim").get<int>();
  if (net.dim < 1) throw ConfigError("net dim must be positive");
  for (const json& lj : j.at("layers")) {
    const std::string type = lj.at("type").get<std::string>();
    if (type == "coupling") {
      if (net.dim % 2 != 0) throw ConfigError("coupling layer in an odd-dimensional net");
      Mlp m = mlp_from_json(lj.at("conditioner"));
      if (m.in_dim() != net.dim / 2 || m.out_dim() != net.dim / 2)
        throw ConfigError("conditioner widths do not match the coupling split");
      net.layers.emplace_back(CouplingLayer{net.dim, std::move(m)});
    } else if (type == "permutation") {
      auto perm = lj.at("perm").get<std::vector<int>>();
      if (static_cast<int>(perm.size()) != net.dim)
        throw ConfigError("permutation length does not match net dim");
      std::vector<char> seen(perm.size(), 0);
      for (int v : perm) {
        if (v < 0 || v >= net.dim || seen[v]) throw ConfigError("invalid permutation in net JSON");
        seen[v] = 1;
      }
      net.layers.emplace_back(PermutationLayer::from_perm(std::move(perm)));
    } else if (type == "linear") {
      net.layers.emplace_back(LinearLayer::make(net.dim, lj.at("matrix").get<Vec>()));
    } else {
      throw ConfigError("unknown layer type '" + type + "'");
    }
  }
  return net;
}

// ---- whole models ----

inline json model_to_json(const NeuralGroupAction& A) {
  json slots = json::array();
  for (const auto& t : A.slot_nets) slots.push_back(net_to_json(t));
  return json{{"schema_version", kSchemaVersion},
              {"kind", "neural_group_action"},
              {"group_action", action_to_json(A.action)},
              {"p", A.p},
              {"slot_nets", slots},
              {"conjugator", net_to_json(A.conjugator)}};
}

inline NeuralGroupAction model_from_json(const json& j) {
  if (j.value("schema_version", -1) != kSchemaVersion)
    throw ConfigError("unsupported schema_version (expected " + std::to_string(kSchemaVersion) +
                      ")");
  NeuralGroupAction A;
  A.action = action_from_json(j.at("group_action"));
  A.p = j.at("p").get<int>();
  if (A.p < 1) throw ConfigError("p must be positive");
  for (const json& nj : j.at("slot_nets")) A.slot_nets.push_back(net_from_json(nj));
  A.conjugator = net_from_json(j.at("conjugator"));
  if (static_cast<int>(A.slot_nets.size()) != A.action.set_size)
    throw ConfigError("model has " + std::to_string(A.slot_nets.size()) + " slot nets for " +
                      std::to_string(A.action.set_size) + " slots");
  for (const auto& t : A.slot_nets)
    if (t.dim != A.p) throw ConfigError("slot net dim does not match p");
  if (A.conjugator.dim != A.dim())
    throw ConfigError("conjugator dim does not match p * set_size");
  return A;
}

// ---- reports and optimizer state ----

inline json law_report_to_json(const LawReport& r) {
  json pairs = json::array();
  for (const auto& p : r.pairs)
    pairs.push_back(json{{"g", p.g}, {"h", p.h}, {"max", p.max_resid}, {"mean", p.mean_resid}});
  return json{{"samples", r.samples},   {"tol", r.tol},
              {"identity_max", r.identity_max}, {"identity_mean", r.identity_mean},
              {"max_residual", r.max_residual}, {"pass", r.pass},
              {"pairs", pairs}};
}

inline json volume_report_to_json(const VolumeReport& r) {
  json elems = json::array();
  for (const auto& e : r.elements) elems.push_back(json{{"g", e.g}, {"max_dev", e.max_dev}});
  return json{{"samples", r.samples}, {"fd_step", r.fd_step},     {"tol", r.tol},
              {"max_dev", r.max_dev}, {"elements", elems}, {"pass", r.pass}};
}

inline json adam_state_to_json(const AdamState& s) {
  return json{{"step", s.step}, {"m", s.m}, {"v", s.v}};
}

inline AdamState adam_state_from_json(const json& j) {
  AdamState s;
  s.step = j.at("step").get<int64_t>();
  s.m = j.at("m").get<Vec>();
  s.v = j.at("v").get<Vec>();
  return s;
}

// ---- files and formatting ----

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error("failed writing '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("failed to parse '" + path + "': " + e.what());
  }
}

/// Shortest decimal representation that parses back to the same double
/// (nlohmann's Grisu2 writer), used for CSV cells as well.
inline std::string fmt_double(double x) { return json(x).dump(); }

/// Loss history CSV: epoch, train_loss, test_loss, max_law_residual.
inline std::string history_to_csv(const std::vector<EpochStats>& history) {
  std::string csv = "epoch,train_loss,test_loss,max_law_residual\n";
  for (const auto& st : history) {
    csv += std::to_string(st.epoch) + "," + fmt_double(st.train_loss) + "," +
           fmt_double(st.test_loss) + "," + fmt_double(st.max_law_residual) + "\n";
  }
  return csv;
}

}  // namespace nga
