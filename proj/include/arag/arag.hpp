#pragma once

#include "arag/agents.hpp"
#include "arag/blackboard.hpp"
#include "arag/config.hpp"
#include "arag/corpus.hpp"
#include "arag/embed.hpp"
#include "arag/error.hpp"
#include "arag/eval.hpp"
#include "arag/hash.hpp"
#include "arag/heuristic_backend.hpp"
#include "arag/llm.hpp"
#include "arag/pipeline.hpp"
#include "arag/prompts.hpp"
#include "arag/report.hpp"
#include "arag/synthetic.hpp"
