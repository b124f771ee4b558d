#pragma once

#include "rsel/core.hpp"
#include "rsel/corpus.hpp"
#include "rsel/encoding.hpp"
#include "rsel/error.hpp"
#include "rsel/evaluation.hpp"
#include "rsel/heuristic.hpp"
#include "rsel/learned.hpp"
#include "rsel/lm_backends.hpp"
#include "rsel/lm_http.hpp"
#include "rsel/probe.hpp"
#include "rsel/ranking.hpp"
#include "rsel/serialize.hpp"
#include "rsel/service.hpp"
#include "rsel/http.hpp"
#include "rsel/stats.hpp"
