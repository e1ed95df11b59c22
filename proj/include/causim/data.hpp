#pragma once

#include "causim/data/bias.hpp"
#include "causim/data/dataset.hpp"
#include "causim/data/generator.hpp"
#include "causim/data/graph.hpp"
#include "causim/data/ingest.hpp"
#include "causim/data/table.hpp"
