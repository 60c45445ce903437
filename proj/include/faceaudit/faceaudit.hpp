#pragma once

#include "faceaudit/benchrel.hpp"
#include "faceaudit/biomet.hpp"
#include "faceaudit/embset.hpp"
#include "faceaudit/error.hpp"
#include "faceaudit/kernel.hpp"
#include "faceaudit/leakage.hpp"
#include "faceaudit/pairsample.hpp"
#include "faceaudit/report.hpp"
#include "faceaudit/rng.hpp"
#include "faceaudit/simkern.hpp"
#include "faceaudit/verify.hpp"
#include "faceaudit/version.hpp"
