#pragma once

// Umbrella header for the whole library.

#include "dmap/bundle.hpp"
#include "dmap/doc_model.hpp"
#include "dmap/embed.hpp"
#include "dmap/error.hpp"
#include "dmap/eval.hpp"
#include "dmap/llm.hpp"
#include "dmap/map_builder.hpp"
#include "dmap/offline_agents.hpp"
#include "dmap/prompts.hpp"
#include "dmap/reflective_qa.hpp"
#include "dmap/retrieval.hpp"
#include "dmap/serialize.hpp"
#include "dmap/text.hpp"
