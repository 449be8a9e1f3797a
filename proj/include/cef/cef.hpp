#pragma once

// Umbrella header.

#include "cef/aggregation.hpp"
#include "cef/checkpoint.hpp"
#include "cef/dataset.hpp"
#include "cef/errors.hpp"
#include "cef/feature_file.hpp"
#include "cef/grad_check.hpp"
#include "cef/metrics.hpp"
#include "cef/model.hpp"
#include "cef/ops.hpp"
#include "cef/predictions.hpp"
#include "cef/synth.hpp"
#include "cef/tensor.hpp"
#include "cef/trainer.hpp"
