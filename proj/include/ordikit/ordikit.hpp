#pragma once

#include "ordikit/analytics.hpp"
#include "ordikit/clustering.hpp"
#include "ordikit/corpus.hpp"
#include "ordikit/difficulty.hpp"
#include "ordikit/error.hpp"
#include "ordikit/gateway.hpp"
#include "ordikit/hash.hpp"
#include "ordikit/hdbscan.hpp"
#include "ordikit/io.hpp"
#include "ordikit/mock_server.hpp"
#include "ordikit/pipeline.hpp"
#include "ordikit/prompting.hpp"
#include "ordikit/reduce.hpp"
#include "ordikit/report.hpp"
#include "ordikit/rng.hpp"
#include "ordikit/scheduler.hpp"
#include "ordikit/stats.hpp"
#include "ordikit/synth.hpp"
