// Scratch probe: prints the CD-L1 floor of a k-point FPS subset vs the full
// ground truth for each sample of a dataset. Not registered with ctest.
#include <iostream>

#include "fsc/datagen.hpp"
#include "fsc/geom.hpp"
#include "fsc/metrics.hpp"

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: floor_probe DATASET K\n";
    return 2;
  }
  const std::string root = argv[1];
  const Eigen::Index k = std::stol(argv[2]);
  const auto man = fsc::read_manifest(root);
  for (const auto& s : man.samples("train")) {
    const auto gt = fsc::load_sample_cloud(root, s, "gt.ply");
    const auto sub = fsc::farthest_point_sample(gt, k, 0);
    const double cd = fsc::chamfer_l1(sub, gt);
    std::cout << s.id << " cd_l1_x1000 " << cd * 1000.0 << "\n";
  }
  return 0;
}
