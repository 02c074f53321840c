// Recovers the Lennard-Jones pair law from samples of an analytic head.

#include <iostream>

#include "hdl/symreg.hpp"

int main() {
  using namespace hdl;
  const sr::HeadSpec head = sr::parse_head("edge:1-1");
  const auto samples =
      sr::sample_head(sr::analytic_head(SystemKind::BinaryLJ, head), head, 0.8, 2.0, 500, sr::GridKind::DenseLow);
  sr::GpConfig cfg;
  cfg.powers = {-12, -6};
  const sr::DistillReport rep = sr::distill(samples, cfg);
  std::cout << "complexity  loss        score   equation\n";
  for (const auto& e : rep.scored)
    std::cout << e.complexity << "  " << e.loss << "  " << e.score << "  " << e.equation << '\n';
  std::cout << "selected: " << rep.selected.equation << '\n';
  if (rep.coefficients)
    for (auto [k, v] : *rep.coefficients) std::cout << "  x^" << k << ": " << v << '\n';
}
