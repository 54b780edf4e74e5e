#pragma once

#include <functional>
#include <string>
#include <tuple>
#include <vector>

#include "lipres/scoring.hpp"

namespace oracle {

// Exhaustive enumeration of every alignment of ref against hyp. Returns the
// counts of the best one under (cost, -hits, substitutions).
struct BruteAlignment {
  long cost = -1;
  int H = 0, S = 0, D = 0, I = 0;
};

inline BruteAlignment brute_force_align(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                                        lipres::AlignCosts c = {}) {
  BruteAlignment best;
  std::function<void(std::size_t, std::size_t, long, int, int, int, int)> go =
      [&](std::size_t i, std::size_t j, long cost, int h, int s, int d, int ins) {
        if (i == ref.size() && j == hyp.size()) {
          const auto key = std::make_tuple(cost, -h, s);
          if (best.cost < 0 || key < std::make_tuple(best.cost, -best.H, best.S)) best = {cost, h, s, d, ins};
          return;
        }
        if (i < ref.size() && j < hyp.size()) {
          if (ref[i] == hyp[j])
            go(i + 1, j + 1, cost, h + 1, s, d, ins);
          else
            go(i + 1, j + 1, cost + c.substitution, h, s + 1, d, ins);
        }
        if (i < ref.size()) go(i + 1, j, cost + c.deletion, h, s, d + 1, ins);
        if (j < hyp.size()) go(i, j + 1, cost + c.insertion, h, s, d, ins + 1);
      };
  go(0, 0, 0, 0, 0, 0, 0);
  return best;
}

}  // namespace oracle
