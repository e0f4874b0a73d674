#pragma once

#include "memse/activation.hpp"
#include "memse/crossbar.hpp"
#include "memse/error.hpp"
#include "memse/io.hpp"
#include "memse/linalg.hpp"
#include "memse/moments.hpp"
#include "memse/montecarlo.hpp"
#include "memse/netmodel.hpp"
#include "memse/optimizer.hpp"
#include "memse/power.hpp"
#include "memse/predict.hpp"
#include "memse/version.hpp"
