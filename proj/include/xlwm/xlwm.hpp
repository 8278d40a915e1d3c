#pragma once

// Umbrella header for the cross-lingual watermarking toolkit.

#include "xlwm/attack.hpp"
#include "xlwm/cluster.hpp"
#include "xlwm/common.hpp"
#include "xlwm/core.hpp"
#include "xlwm/detect.hpp"
#include "xlwm/embed.hpp"
#include "xlwm/harness.hpp"
#include "xlwm/judge.hpp"
#include "xlwm/lm.hpp"
#include "xlwm/quality.hpp"
#include "xlwm/record_io.hpp"
#include "xlwm/rng.hpp"
#include "xlwm/sha256.hpp"
#include "xlwm/stats.hpp"
#include "xlwm/watermark.hpp"
