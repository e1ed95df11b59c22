#pragma once

#include "causim/vgae/checkpoint.hpp"
#include "causim/vgae/model.hpp"
