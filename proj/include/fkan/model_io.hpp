#pragma once

// Model checkpointing: a single JSON document holding the model description,
// seed, named parameter slices, and parameter values (round-trip exact
// decimal serialization of 64-bit floats).

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "fkan/model.hpp"

namespace fkan {

inline nlohmann::json spec_to_json(const ModelSpec& s) {
  return nlohmann::json{
      {"kind", s.kind},           {"widths", s.widths},
      {"grid", s.grid},           {"kernel", kernels::to_string(s.kernel)},
      {"in_lo", s.in_lo},         {"in_hi", s.in_hi},
      {"tanh_norm", s.tanh_norm}, {"mlp_bias", s.mlp_bias}};
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.kind = j.at("kind").get<std::string>();
  s.widths = j.at("widths").get<std::vector<int>>();
  s.grid = j.at("grid").get<int>();
  s.kernel = kernels::parse(j.at("kernel").get<std::string>());
  s.in_lo = j.at("in_lo").get<double>();
  s.in_hi = j.at("in_hi").get<double>();
  s.tanh_norm = j.at("tanh_norm").get<bool>();
  s.mlp_bias = j.at("mlp_bias").get<bool>();
  return s;
}

struct Checkpoint {
  Model model;
  ParamStore store;
  std::uint64_t seed = 0;
};

inline void save_checkpoint(const std::string& path, const Model& m,
                            const ParamStore& store, std::uint64_t seed) {
  nlohmann::json j;
  j["spec"] = spec_to_json(m.spec);
  // dynamic grid state (knot spans can move during training)
  nlohmann::json state = nlohmann::json::array();
  for (const auto& layer : m.layers) {
    if (const auto* L = std::get_if<BsplineKanLayer>(&layer)) {
      state.push_back(nlohmann::json{{"knots", L->knots}});
    } else {
      state.push_back(nullptr);
    }
  }
  j["layer_state"] = state;
  j["seed"] = seed;
  nlohmann::json names = nlohmann::json::array();
  for (const auto& s : store.slices()) {
    names.push_back(nlohmann::json{{"name", s.name}, {"offset", s.offset}, {"size", s.size}});
  }
  j["param_names"] = names;
  j["param_values"] = std::vector<double>(store.values().begin(), store.values().end());
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path);
  f << j.dump(1) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read checkpoint " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  Checkpoint cp;
  cp.seed = j.at("seed").get<std::uint64_t>();
  cp.model = init_model(spec_from_json(j.at("spec")), cp.seed, cp.store);
  auto vals = j.at("param_values").get<std::vector<double>>();
  if (vals.size() != cp.store.size()) {
    throw std::runtime_error("checkpoint parameter count mismatch");
  }
  std::copy(vals.begin(), vals.end(), cp.store.values().begin());
  const auto& state = j.at("layer_state");
  for (std::size_t li = 0; li < cp.model.layers.size(); ++li) {
    if (auto* L = std::get_if<BsplineKanLayer>(&cp.model.layers[li])) {
      if (!state.at(li).is_null()) {
        L->knots = state.at(li).at("knots").get<std::vector<std::vector<double>>>();
      }
    }
  }
  return cp;
}

}  // namespace fkan
