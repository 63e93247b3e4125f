#pragma once

#include "sgc/core.hpp"
#include "sgc/error.hpp"
#include "sgc/gsa.hpp"
#include "sgc/hierarchy.hpp"
#include "sgc/io.hpp"
#include "sgc/llm.hpp"
#include "sgc/matching.hpp"
#include "sgc/scoring.hpp"
