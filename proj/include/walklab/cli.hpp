#pragma once

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "walklab/common.hpp"
#include "walklab/corpus.hpp"
#include "walklab/inference.hpp"
#include "walklab/seq2seq.hpp"

namespace walklab::cli {

// Reproducibility sidecar: every artifact-producing command writes exactly one.
// Wall-clock time lives here and only here — report files carry no timing, so
// identical inputs reproduce them byte for byte.
struct RunManifest {
    std::vector<std::string> command_line;
    std::string tool_version;
    std::string config_fingerprint;  // hex; empty when no model config involved
    std::string corpus_checksum;     // hex digest of corpus.jsonl; empty when unused
    std::vector<std::uint64_t> seeds;
    double wall_clock_seconds = 0.0;
    std::map<std::string, std::string> output_digests;  // relative path -> digest
    std::string to_json() const;
};

// Owning storage behind an inference::Ensemble view. The view borrows
// pointers, so keep the bundle alive (and unmoved) while using it.
struct LoadedEnsemble {
    std::string fold;
    seq2seq::ModelConfig config;
    std::vector<seq2seq::ModelParams> members;
    inference::Ensemble view() const;
};

// Model directory layout: DIR/config.json, DIR/vocab.txt, then one
// subdirectory per fold (named for the held-out map) holding
// member_<k>.ckpt and history_<k>.csv.
LoadedEnsemble load_fold_models(const std::string& model_dir, const std::string& fold);
corpus::Vocabulary load_model_vocab(const std::string& model_dir);

// Entry point shared by main() and the tests; never calls exit().
// Exit status: 0 success, 1 usage, 2 data integrity, 3 numerical abort,
// 4 internal error.
int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
             std::ostream& err = std::cerr);
int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
             std::ostream& err = std::cerr);

}  // namespace walklab::cli
