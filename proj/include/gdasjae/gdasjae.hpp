// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gdasjae/errors.hpp"
#include "gdasjae/random.hpp"
#include "gdasjae/tensor.hpp"
#include "gdasjae/autodiff.hpp"
#include "gdasjae/nn.hpp"
#include "gdasjae/genotype.hpp"
#include "gdasjae/dataio.hpp"
#include "gdasjae/model.hpp"
#include "gdasjae/evalharness.hpp"
#include "gdasjae/search.hpp"
#include "gdasjae/config.hpp"
#include "gdasjae/checkpoint.hpp"
