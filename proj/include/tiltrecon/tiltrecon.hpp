#pragma once

#include "tiltrecon/calibration.hpp"
#include "tiltrecon/dataset_io.hpp"
#include "tiltrecon/errors.hpp"
#include "tiltrecon/fft.hpp"
#include "tiltrecon/field_ops.hpp"
#include "tiltrecon/forward_sim.hpp"
#include "tiltrecon/grid.hpp"
#include "tiltrecon/metrics.hpp"
#include "tiltrecon/propagation.hpp"
#include "tiltrecon/recon.hpp"
#include "tiltrecon/stitch.hpp"
