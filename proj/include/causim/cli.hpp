#pragma once

#include "causim/cli/commands.hpp"
#include "causim/cli/config.hpp"
