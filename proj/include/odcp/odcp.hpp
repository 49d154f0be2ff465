#pragma once

// Everything except the CLI front end.

#include "odcp/error.hpp"
#include "odcp/special.hpp"
#include "odcp/simplex.hpp"
#include "odcp/rng.hpp"
#include "odcp/parallel.hpp"
#include "odcp/dirichlet.hpp"
#include "odcp/gaussian.hpp"
#include "odcp/transform.hpp"
#include "odcp/detector.hpp"
#include "odcp/pipeline.hpp"
#include "odcp/datagen.hpp"
#include "odcp/eval.hpp"
