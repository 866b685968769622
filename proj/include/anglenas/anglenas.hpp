#pragma once

#include "anglenas/angle.hpp"
#include "anglenas/bench.hpp"
#include "anglenas/config.hpp"
#include "anglenas/dataset.hpp"
#include "anglenas/driver.hpp"
#include "anglenas/errors.hpp"
#include "anglenas/evalstats.hpp"
#include "anglenas/graph.hpp"
#include "anglenas/matrix.hpp"
#include "anglenas/network.hpp"
#include "anglenas/nnet.hpp"
#include "anglenas/parallel.hpp"
#include "anglenas/rng.hpp"
#include "anglenas/search.hpp"
#include "anglenas/shrink.hpp"
#include "anglenas/supernet.hpp"
#include "anglenas/weight_store.hpp"
