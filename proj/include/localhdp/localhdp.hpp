#pragma once

#include "localhdp/corpus.hpp"
#include "localhdp/features.hpp"
#include "localhdp/hdp.hpp"
#include "localhdp/protocol.hpp"
#include "localhdp/registry.hpp"
#include "localhdp/snapshot.hpp"
