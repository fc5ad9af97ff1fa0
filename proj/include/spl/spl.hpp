#pragma once

// Umbrella header for the SPL engine: lexer, parser, analyzer, planner,
// EXPLAIN renderer, stores, adapters, orchestration, and the executor.
// The HTTP adapter lives in spl/http_adapter.hpp and is not pulled in here.

#include "spl/adapter.hpp"
#include "spl/analyzer.hpp"
#include "spl/ast.hpp"
#include "spl/benchmark.hpp"
#include "spl/config.hpp"
#include "spl/explain.hpp"
#include "spl/fanout.hpp"
#include "spl/lexer.hpp"
#include "spl/orchestrator.hpp"
#include "spl/parser.hpp"
#include "spl/planner.hpp"
#include "spl/printer.hpp"
#include "spl/runtime.hpp"
#include "spl/sha256.hpp"
#include "spl/stores.hpp"
#include "spl/token.hpp"
