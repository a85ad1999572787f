#pragma once

#include "franson/analysis.hpp"
#include "franson/analytic_model.hpp"
#include "franson/auxiliary.hpp"
#include "franson/config.hpp"
#include "franson/correlator.hpp"
#include "franson/error.hpp"
#include "franson/experiment.hpp"
#include "franson/montecarlo.hpp"
#include "franson/optics.hpp"
#include "franson/pipeline.hpp"
#include "franson/source.hpp"
#include "franson/text_io.hpp"
#include "franson/timetag.hpp"
