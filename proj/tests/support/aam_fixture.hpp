#pragma once

#include <random>
#include <vector>

#include "lipres/aam.hpp"

namespace fixture {

// A small smoothly-textured deformable object on a 200x160 canvas.
struct ToyModel {
  lipres::Shape canonical;
  std::vector<lipres::LabelledFrame> training;
  lipres::Aam aam;
};

lipres::Shape toy_shape(double open, double width, double skew, const lipres::SimilarityTransform& pose);
lipres::Image toy_image(const lipres::Shape& shape, double c1, double c2);
ToyModel build_toy_model(unsigned seed = 1, int n_frames = 14);

}  // namespace fixture
