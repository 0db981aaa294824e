#pragma once

#include "posefeat/config.hpp"

namespace posefeat::test {

/// A configuration small enough to train and evaluate in a few seconds.
inline RunConfig tiny_config() {
  RunConfig c = default_config("synthetic");
  c.train_pairs = 4;
  c.heldout_pairs = 4;
  c.epochs = 2;
  c.batch_pairs = 2;
  c.model_points = 600;
  c.object_points = 300;
  c.scene_points = 900;
  c.max_pairs = 80;
  c.scene_sample_cap = 300;
  c.feature_dim = 8;
  c.hidden_dim = 12;
  c.ransac_iterations = 300;
  c.num_distractors = 1;
  c.fmr_pairs_per_epoch = 2;
  c.validate();
  return c;
}

}  // namespace posefeat::test
