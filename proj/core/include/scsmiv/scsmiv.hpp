#pragma once

#include "scsmiv/analysis.hpp"
#include "scsmiv/data_model.hpp"
#include "scsmiv/dataset_io.hpp"
#include "scsmiv/error.hpp"
#include "scsmiv/estimator.hpp"
#include "scsmiv/inference.hpp"
#include "scsmiv/iv_center.hpp"
#include "scsmiv/report_io.hpp"
#include "scsmiv/simulator.hpp"
