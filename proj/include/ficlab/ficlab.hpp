#pragma once

// Umbrella header for the whole library.

#include "ficlab/averaging.hpp"
#include "ficlab/cdfic.hpp"
#include "ficlab/csv.hpp"
#include "ficlab/dataio.hpp"
#include "ficlab/ficscores.hpp"
#include "ficlab/glmfit.hpp"
#include "ficlab/limitcore.hpp"
#include "ficlab/risklab.hpp"
#include "ficlab/rng.hpp"
#include "ficlab/special.hpp"
#include "ficlab/svg.hpp"
