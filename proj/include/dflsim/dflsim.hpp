#pragma once

// Deterministic simulator of blockchain-backed decentralized federated
// learning with two-stage aggregator vetting: drift scoring before selection
// and dependence auditing after aggregation.

#include "dflsim/aggregation.hpp"
#include "dflsim/attacks.hpp"
#include "dflsim/config.hpp"
#include "dflsim/contracts.hpp"
#include "dflsim/hsic.hpp"
#include "dflsim/ledger.hpp"
#include "dflsim/learning.hpp"
#include "dflsim/param_math.hpp"
#include "dflsim/rng.hpp"
#include "dflsim/simulator.hpp"
