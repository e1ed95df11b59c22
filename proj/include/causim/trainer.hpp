#pragma once

#include "causim/trainer/train.hpp"
