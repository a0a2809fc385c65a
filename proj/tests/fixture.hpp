#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "sosmas/poly.hpp"

namespace fixture {

inline nlohmann::json load_example() {
  std::ifstream in(std::string(SOSMAS_DATA_DIR) + "/paper_example.json");
  return nlohmann::json::parse(in);
}

inline sosmas::Polynomial example_v() { return load_example().at("V").get<sosmas::Polynomial>(); }
inline sosmas::PolyVector example_h1() { return load_example().at("h1").get<sosmas::PolyVector>(); }
inline sosmas::PolyVector example_h2() { return load_example().at("h2").get<sosmas::PolyVector>(); }

inline sosmas::Monomial mono(std::vector<int> e) { return sosmas::Monomial(std::move(e)); }

}  // namespace fixture
