#pragma once

// Convenience include for the whole library. Network transports live in
// armove/net.hpp and are not pulled in here, so translation units that
// never talk to the outside world stay free of socket headers.

#include "armove/canonical.hpp"
#include "armove/common.hpp"
#include "armove/config.hpp"
#include "armove/corpus.hpp"
#include "armove/features.hpp"
#include "armove/geo.hpp"
#include "armove/layout.hpp"
#include "armove/llm.hpp"
#include "armove/metrics.hpp"
#include "armove/optimizer.hpp"
#include "armove/pipeline.hpp"
#include "armove/predictor.hpp"
#include "armove/profiler.hpp"
#include "armove/transfer.hpp"
