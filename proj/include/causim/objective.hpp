#pragma once

#include "causim/objective/loss.hpp"
