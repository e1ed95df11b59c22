#pragma once

#include "causim/graphsuite/baselines.hpp"
#include "causim/graphsuite/io.hpp"
#include "causim/graphsuite/metrics.hpp"
