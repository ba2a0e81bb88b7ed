// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "augment.hpp"
#include "baselines.hpp"
#include "channel.hpp"
#include "checkpoint.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "harness.hpp"
#include "layers.hpp"
#include "mhdnn.hpp"
#include "rng.hpp"
#include "scenario.hpp"
#include "tensor.hpp"
#include "vote.hpp"
