#pragma once

#include "gcdiff/core.hpp"
#include "gcdiff/denoiser.hpp"
#include "gcdiff/diffusion_process.hpp"
#include "gcdiff/gc_distribution.hpp"
#include "gcdiff/metrics.hpp"
#include "gcdiff/sampler.hpp"
#include "gcdiff/schedules.hpp"
#include "gcdiff/toy_scenes.hpp"
#include "gcdiff/training.hpp"
