// Geometric gates and the combined attention they produce for a three-object
// scene: a cup left of a plate, and a fork far to the right.

#include <cstdio>
#include <vector>

#include "ort/geometry.hpp"
#include "ort/model/attention.hpp"
#include "ort/numerics/rng.hpp"

int main() {
  using namespace ort;
  const std::vector<BoundingBox> boxes = {{100, 200, 40, 40}, {160, 205, 60, 50}, {340, 190, 30, 50}};
  const char* names[] = {"cup", "plate", "fork"};
  const GeometryConfig cfg;
  Rng rng(7);
  const auto params = init_geometric_params<double>(cfg, rng);

  std::printf("displacement lambda(m, n)\n");
  for (std::size_t m = 0; m < boxes.size(); ++m) {
    for (std::size_t n = 0; n < boxes.size(); ++n) {
      const auto l = displacement(boxes[m], boxes[n], cfg);
      std::printf("  %-5s -> %-5s  [% .3f % .3f % .3f % .3f]\n", names[m], names[n], l[0], l[1], l[2], l[3]);
    }
  }

  const auto gates = geometry_matrix(boxes, params, cfg);
  const auto appearance = Tensor<double>({3, 3}, {2.0, 0.5, 0.1, 0.4, 1.5, 0.3, 0.2, 0.1, 1.0});
  const auto omega = combined_attention(appearance, gates);
  const auto plain = softmax_rows(appearance);
  std::printf("\nquery  gates                    combined                 softmax\n");
  for (std::size_t m = 0; m < 3; ++m) {
    std::printf("%-5s ", names[m]);
    for (std::size_t n = 0; n < 3; ++n) std::printf(" %.4f", gates.at(m, n));
    std::printf("   ");
    for (std::size_t n = 0; n < 3; ++n) std::printf(" %.4f", omega.at(m, n));
    std::printf("   ");
    for (std::size_t n = 0; n < 3; ++n) std::printf(" %.4f", plain.at(m, n));
    std::printf("\n");
  }

  // Moving the whole scene leaves every gate unchanged.
  std::vector<BoundingBox> moved = boxes;
  for (auto& b : moved) {
    b.x_center += 55.0;
    b.y_center -= 30.0;
  }
  const auto gates2 = geometry_matrix(moved, params, cfg);
  double diff = 0.0;
  for (std::size_t i = 0; i < 9; ++i) diff = std::max(diff, std::abs(gates[i] - gates2[i]));
  std::printf("\nmax gate change after translation: %g\n", diff);
  return 0;
}
