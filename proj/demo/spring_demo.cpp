// Learns a 3-spring Hamiltonian from short trajectories, then rolls the
// learned model out on a 10-spring system it never saw.
//
//   spring_demo [epochs]

#include <cstdlib>
#include <iostream>
#include <vector>

#include "hdl/evaluation.hpp"
#include "hdl/ground_truth.hpp"
#include "hdl/hgnn.hpp"
#include "hdl/training.hpp"

int main(int argc, char** argv) {
  using namespace hdl;
  const int epochs = argc > 1 ? std::atoi(argv[1]) : 200;

  const SystemSpec spec = make_spec(SystemKind::Spring, 3);
  const AnalyticSystem sys(spec);
  std::vector<Trajectory> trajs;
  for (std::uint64_t s = 0; s < 40; ++s)
    trajs.push_back(generate_trajectory(sys, sample_initial(spec, 100 + s), 1e-3, 1900, 100, true));
  const Dataset ds = build_dataset(trajs, 20, 1);
  std::cout << "pairs: " << ds.train.size() << " train, " << ds.validation.size() << " validation\n";

  TrainConfig cfg;
  cfg.max_epochs = epochs;
  cfg.seed = 2;
  const TrainResult res = train(init_params(HyperParams{}, 1), ds, cfg, [](const EpochLoss& e) {
    if (e.epoch % 50 == 0) std::cout << "epoch " << e.epoch << "  train " << e.train << "  val " << e.validation << '\n';
  });
  std::cout << "best epoch " << res.best_epoch << " (" << res.stop_reason << ")\n";

  const std::uint64_t seeds[] = {1, 2, 3};
  TransferOptions opt;
  opt.steps = 1000;
  for (int n : {3, 10}) {
    const TransferReport rep = transfer_harness(hgnn_field_factory(res.params), make_spec(SystemKind::Spring, n), seeds, opt);
    std::cout << n << "-spring: median EE " << rep.ee_median << ", median ME " << rep.me_median << ", force MSE "
              << rep.force_mse_median << '\n';
  }
}
