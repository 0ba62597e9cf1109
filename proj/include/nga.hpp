#pragma once

// Invertible networks that satisfy the laws of a finite group by
// construction, plus the training and quantum-gate machinery around them.

#include "nga/common.hpp"
#include "nga/rng.hpp"
#include "nga/group.hpp"
#include "nga/mlp.hpp"
#include "nga/net.hpp"
#include "nga/numdiff.hpp"
#include "nga/action.hpp"
#include "nga/train.hpp"
#include "nga/quantum.hpp"
#include "nga/io.hpp"
