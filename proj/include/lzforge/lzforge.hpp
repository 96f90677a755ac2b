#pragma once

#include "bessel.hpp"
#include "csv.hpp"
#include "experiments.hpp"
#include "grape.hpp"
#include "jump_model.hpp"
#include "nelder_mead.hpp"
#include "propagate.hpp"
#include "pulse.hpp"
#include "qsl_fit.hpp"
#include "svg.hpp"
#include "two_level.hpp"
