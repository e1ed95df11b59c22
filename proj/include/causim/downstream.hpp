#pragma once

#include "causim/downstream/evaluate.hpp"
#include "causim/downstream/predictor.hpp"
