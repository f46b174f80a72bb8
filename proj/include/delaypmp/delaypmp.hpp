#pragma once

#include "delaypmp/errors.hpp"
#include "delaypmp/timegrid.hpp"
#include "delaypmp/problem.hpp"
#include "delaypmp/kernel.hpp"
#include "delaypmp/fde.hpp"
#include "delaypmp/resolvent.hpp"
#include "delaypmp/lp.hpp"
#include "delaypmp/needle.hpp"
#include "delaypmp/multipliers.hpp"
#include "delaypmp/pmp.hpp"
#include "delaypmp/problems.hpp"
