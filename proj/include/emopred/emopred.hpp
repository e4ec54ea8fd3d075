// Umbrella header.
#pragma once

#include "emopred/afeat.hpp"
#include "emopred/common.hpp"
#include "emopred/corpusio.hpp"
#include "emopred/encoder.hpp"
#include "emopred/predictor.hpp"
#include "emopred/ranker.hpp"
#include "emopred/textembed.hpp"
#include "emopred/wav.hpp"
