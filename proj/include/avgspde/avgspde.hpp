#pragma once

#include "avgspde/errors.hpp"
#include "avgspde/spectral.hpp"
#include "avgspde/models.hpp"
#include "avgspde/noise.hpp"
#include "avgspde/parallel.hpp"
#include "avgspde/integrators.hpp"
#include "avgspde/averaging.hpp"
#include "avgspde/expansion.hpp"
#include "avgspde/config.hpp"
#include "avgspde/experiments.hpp"
