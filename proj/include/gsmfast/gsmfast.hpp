#pragma once

#include "gsmfast/audio_io.hpp"
#include "gsmfast/bessel.hpp"
#include "gsmfast/errors.hpp"
#include "gsmfast/gsm_priors.hpp"
#include "gsmfast/harness.hpp"
#include "gsmfast/linalg.hpp"
#include "gsmfast/metrics.hpp"
#include "gsmfast/model.hpp"
#include "gsmfast/optimizer.hpp"
#include "gsmfast/stft.hpp"
#include "gsmfast/tensor.hpp"
#include "gsmfast/wiener.hpp"
