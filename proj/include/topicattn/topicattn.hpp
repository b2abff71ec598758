#pragma once

#include "topicattn/attention_archive.hpp"
#include "topicattn/coherence.hpp"
#include "topicattn/corpus.hpp"
#include "topicattn/corpus_io.hpp"
#include "topicattn/error.hpp"
#include "topicattn/experiment.hpp"
#include "topicattn/experiment_config.hpp"
#include "topicattn/gmm.hpp"
#include "topicattn/lda.hpp"
#include "topicattn/nmf.hpp"
#include "topicattn/overlap.hpp"
#include "topicattn/topic_model.hpp"
#include "topicattn/word_vectors.hpp"
