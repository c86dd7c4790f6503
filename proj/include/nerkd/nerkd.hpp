#pragma once

#include "nerkd/align.hpp"
#include "nerkd/config.hpp"
#include "nerkd/corpus.hpp"
#include "nerkd/harness.hpp"
#include "nerkd/llm_client.hpp"
#include "nerkd/llm_output.hpp"
#include "nerkd/metrics.hpp"
#include "nerkd/prompt.hpp"
#include "nerkd/record.hpp"
#include "nerkd/schedule.hpp"
