#pragma once

// Umbrella header for the structured contrastive learning lab.

#include "scl/common.hpp"
#include "scl/rng.hpp"
#include "scl/tensor.hpp"
#include "scl/optim.hpp"
#include "scl/model.hpp"
#include "scl/signal.hpp"
#include "scl/transform.hpp"
#include "scl/dataset.hpp"
#include "scl/pairs.hpp"
#include "scl/loss.hpp"
#include "scl/config.hpp"
#include "scl/checkpoint.hpp"
#include "scl/train.hpp"
#include "scl/metrics.hpp"
#include "scl/svg.hpp"
#include "scl/report.hpp"
