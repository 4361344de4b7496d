#pragma once

// Model-linking toolkit: learn lightweight mappings between black-box
// models' output spaces from aligned inference traces, ensemble
// multi-source links, schedule multi-model inference under a cost
// budget, adapt links on drifting streams, and aggregate them across
// domains.

#include "mlink/aligned.hpp"
#include "mlink/config.hpp"
#include "mlink/correlation.hpp"
#include "mlink/csv.hpp"
#include "mlink/ensemble.hpp"
#include "mlink/experiment.hpp"
#include "mlink/federation.hpp"
#include "mlink/link.hpp"
#include "mlink/metrics.hpp"
#include "mlink/model.hpp"
#include "mlink/nn/network.hpp"
#include "mlink/online.hpp"
#include "mlink/schedule.hpp"
#include "mlink/serve.hpp"
#include "mlink/simulate.hpp"
#include "mlink/trace.hpp"
#include "mlink/world.hpp"
