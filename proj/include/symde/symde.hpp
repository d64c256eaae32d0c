#pragma once

#include "symde/errors.hpp"
#include "symde/expression.hpp"
#include "symde/simplify.hpp"
#include "symde/calculus.hpp"
#include "symde/cse.hpp"
#include "symde/evaluate.hpp"
#include "symde/parser.hpp"
#include "symde/system.hpp"
#include "symde/rng.hpp"
#include "symde/executable.hpp"
#include "symde/lower.hpp"
#include "symde/serialize.hpp"
#include "symde/networks.hpp"
#include "symde/ode.hpp"
#include "symde/anchors.hpp"
#include "symde/dde.hpp"
#include "symde/sde.hpp"
#include "symde/lyapunov.hpp"
#include "symde/stats.hpp"
#include "symde/model_file.hpp"
#include "symde/harness.hpp"
