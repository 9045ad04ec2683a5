#pragma once

#include "ectrack/detection.hpp"
#include "ectrack/util.hpp"
#include "ectrack/graph.hpp"
#include "ectrack/spline.hpp"
#include "ectrack/motion.hpp"
#include "ectrack/likelihood.hpp"
#include "ectrack/association.hpp"
#include "ectrack/exact_cover.hpp"
#include "ectrack/sweep.hpp"
#include "ectrack/io.hpp"
#include "ectrack/synth.hpp"
#include "ectrack/config.hpp"
