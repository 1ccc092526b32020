#pragma once

#include <string>
#include <vector>

#include "ville/rng.hpp"
#include "ville/temporal.hpp"
#include "ville/vocab.hpp"

namespace ville {

struct CorpusConfig {
    int64_t n_videos = 200;
    int64_t n_symbols = 24;
    int64_t d_frame = 8;
    double fps = 1.0;
    double duration_min_s = 24.0;
    double duration_max_s = 60.0;
    int64_t min_events = 1;
    int64_t max_events = 5;
    double event_min_s = 6.0;
    double event_max_s = 14.0;
    double gap_min_s = 1.0;
    double gap_max_s = 6.0;
    double noise_sigma = 0.1;
    double symbol_scale = 1.0;
    double twin_fraction = 0.15;   // share of videos that are composed twins
    double time_bucket_s = 5.0;
    int64_t holdout = 50;          // tail videos reserved for eval

    void validate() const;
    int64_t time_buckets() const;
};

struct Event {
    int64_t symbol = 0;
    double start_s = 0;
    double end_s = 0;
};

struct SyntheticVideo {
    std::string id;
    double duration_s = 0;
    std::vector<std::vector<double>> frames;  // [n_frames][d_frame]
    std::vector<Event> events;
    std::vector<std::string> keywords;
    bool has_qa = false;   // multi-event videos get QA and localization labels
    bool has_loc = false;
    int64_t twin_of = -1;  // source index when this video is a composed twin
};

struct QAPair {
    int64_t video = 0;
    std::vector<int64_t> question;  // [QUERY_AT, time token]
    std::vector<int64_t> answer;    // [symbol token], EOS appended at loss time
    double t_s = 0;
};

struct LocAnnotation {
    int64_t video = 0;
    std::vector<int64_t> text;  // [symbol token]
    double start_s = 0;
    double end_s = 0;
};

struct ComposedTriplet {
    int64_t source = 0;
    int64_t target = 0;
    std::vector<int64_t> change_text;  // [old symbol, ->, new symbol]
};

struct Corpus {
    CorpusConfig cfg;
    Vocab vocab;
    uint64_t seed = 0;
    std::vector<SyntheticVideo> videos;
    std::vector<std::vector<int64_t>> captions;           // event symbols in order
    std::vector<std::vector<int64_t>> detailed_captions;  // with start/end time tokens
    std::vector<QAPair> qa;
    std::vector<LocAnnotation> loc;
    std::vector<ComposedTriplet> composed;
    int64_t holdout_start = 0;  // ids >= this are eval-only
    int64_t duplicate_captions = 0;

    int64_t size() const { return static_cast<int64_t>(videos.size()); }
    bool is_holdout(int64_t i) const { return i >= holdout_start; }
    std::vector<int64_t> train_ids() const;
    std::vector<int64_t> holdout_ids() const;
};

Corpus generate_corpus(const CorpusConfig& cfg, uint64_t seed);

void save_corpus(const Corpus& c, const std::string& dir);
Corpus load_corpus(const std::string& dir);
// Stable content fingerprint over manifest + features.
std::string corpus_checksum(const std::string& dir);

// Frames whose centers fall inside the span; never empty (falls back to the
// nearest frame for degenerate slivers).
std::vector<std::vector<double>> frames_in_span(const SyntheticVideo& v, const Span& span,
                                                double fps);
// Symbols of events that mostly (>= half their length) overlap the span, in
// temporal order — the teacher caption for a clip.
std::vector<int64_t> span_caption(const SyntheticVideo& v, const Span& span, const Vocab& vocab);

// Evenly spaced subsample of a video's frames (contextual-text conditioning).
std::vector<std::vector<double>> sparse_frames(const SyntheticVideo& v, int64_t count);

struct KeywordRecord {
    int64_t id = 0;
    std::vector<std::string> keywords;
};

// Frequency-balanced subset selection: keywords under min_occurrences are
// dropped; the rest are visited most-frequent first (ties lexicographic),
// greedily adding carriers in input order until the keyword's selected count
// reaches cap. A video already selected counts toward every keyword it
// carries; a video is only skipped for the keyword that is capped.
std::vector<int64_t> balance_by_keyword(const std::vector<KeywordRecord>& records,
                                        int64_t min_occurrences, int64_t cap);

// Same-video windows with IoU(window, positive) < max_iou, sampled without
// replacement. Fewer candidates than requested is a mining error.
std::vector<Span> mine_hard_negatives(double duration_s, const Span& positive,
                                      const WindowConfig& wcfg, int64_t count, double max_iou,
                                      Rng& rng);

}  // namespace ville
