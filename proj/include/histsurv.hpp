#pragma once

#include "histsurv/common.hpp"
#include "histsurv/config.hpp"
#include "histsurv/csv.hpp"
#include "histsurv/design_sim.hpp"
#include "histsurv/diagnostics.hpp"
#include "histsurv/ene.hpp"
#include "histsurv/manifest.hpp"
#include "histsurv/model.hpp"
#include "histsurv/prior.hpp"
#include "histsurv/random.hpp"
#include "histsurv/sampler.hpp"
#include "histsurv/summary.hpp"
#include "histsurv/survival.hpp"
