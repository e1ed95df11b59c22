#pragma once

#include "causim/numcore/adam.hpp"
#include "causim/numcore/ops.hpp"
#include "causim/numcore/random.hpp"
#include "causim/numcore/tape.hpp"
#include "causim/numcore/tensor.hpp"
