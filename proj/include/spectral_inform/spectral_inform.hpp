#pragma once

#include "errors.hpp"
#include "rng.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "spectra.hpp"
#include "transforms.hpp"
#include "rmt_predict.hpp"
#include "detect_estimate.hpp"
#include "simulate.hpp"
#include "matrix_io.hpp"
#include "svg.hpp"
