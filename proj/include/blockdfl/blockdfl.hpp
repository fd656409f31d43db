#pragma once

#include "blockdfl/adversary.hpp"
#include "blockdfl/aggregation.hpp"
#include "blockdfl/chain.hpp"
#include "blockdfl/compression.hpp"
#include "blockdfl/consensus.hpp"
#include "blockdfl/learner.hpp"
#include "blockdfl/roles.hpp"
#include "blockdfl/sim.hpp"
