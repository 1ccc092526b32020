#include "ville/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "ville/io.hpp"

namespace ville {

using nlohmann::json;

void CorpusConfig::validate() const {
    if (n_videos < 1) throw ConfigError("corpus: n_videos must be >= 1");
    if (n_symbols < 2) throw ConfigError("corpus: need at least 2 symbols");
    if (d_frame < 1) throw ConfigError("corpus: d_frame must be >= 1");
    if (fps <= 0) throw ConfigError("corpus: fps must be positive");
    if (duration_min_s <= 0 || duration_max_s < duration_min_s)
        throw ConfigError("corpus: bad duration range");
    if (min_events < 1 || max_events < min_events)
        throw ConfigError("corpus: bad event count range");
    if (max_events > n_symbols)
        throw ConfigError("corpus: max_events exceeds symbol count");
    if (event_min_s <= 0 || event_max_s < event_min_s)
        throw ConfigError("corpus: bad event length range");
    if (gap_min_s < 0 || gap_max_s < gap_min_s) throw ConfigError("corpus: bad gap range");
    if (gap_max_s + event_min_s > duration_min_s)
        throw ConfigError("corpus: duration_min too small to guarantee one event");
    if (time_bucket_s <= 0) throw ConfigError("corpus: time_bucket_s must be positive");
    if (twin_fraction < 0 || twin_fraction > 0.5)
        throw ConfigError("corpus: twin_fraction outside [0, 0.5]");
    if (holdout < 0 || holdout >= n_videos)
        throw ConfigError("corpus: holdout must be in [0, n_videos)");
}

int64_t CorpusConfig::time_buckets() const {
    return static_cast<int64_t>(std::ceil(duration_max_s / time_bucket_s)) + 1;
}

std::vector<int64_t> Corpus::train_ids() const {
    std::vector<int64_t> out;
    for (int64_t i = 0; i < holdout_start; ++i) out.push_back(i);
    return out;
}

std::vector<int64_t> Corpus::holdout_ids() const {
    std::vector<int64_t> out;
    for (int64_t i = holdout_start; i < size(); ++i) out.push_back(i);
    return out;
}

// ---------------------------------------------------------------- generation

namespace {

struct SymbolBank {
    std::vector<std::vector<double>> base;  // per-symbol feature direction
};

SymbolBank make_symbols(const CorpusConfig& cfg, Rng& rng) {
    SymbolBank b;
    b.base.resize(static_cast<size_t>(cfg.n_symbols));
    for (auto& v : b.base) v = rng.gaussian_vec(static_cast<size_t>(cfg.d_frame), 0.0, cfg.symbol_scale);
    return b;
}

void render_frames(SyntheticVideo& v, const CorpusConfig& cfg, const SymbolBank& bank, Rng& noise) {
    int64_t n = std::max<int64_t>(1, static_cast<int64_t>(std::llround(v.duration_s * cfg.fps)));
    v.frames.assign(static_cast<size_t>(n), {});
    for (int64_t t = 0; t < n; ++t) {
        double center = (static_cast<double>(t) + 0.5) / cfg.fps;
        const std::vector<double>* active = nullptr;
        for (const Event& e : v.events)
            if (center >= e.start_s && center < e.end_s) {
                active = &bank.base[static_cast<size_t>(e.symbol)];
                break;
            }
        std::vector<double> f(static_cast<size_t>(cfg.d_frame));
        for (int64_t d = 0; d < cfg.d_frame; ++d)
            f[static_cast<size_t>(d)] = (active ? (*active)[static_cast<size_t>(d)] : 0.0) +
                                        noise.gaussian(0.0, cfg.noise_sigma);
        v.frames[static_cast<size_t>(t)] = std::move(f);
    }
}

void annotate(SyntheticVideo& v, const Vocab& vocab) {
    v.keywords.clear();
    for (const Event& e : v.events) v.keywords.push_back("sym" + std::to_string(e.symbol));
    v.has_qa = v.events.size() >= 2;
    v.has_loc = v.events.size() >= 2;
    (void)vocab;
}

// Place non-overlapping events along the timeline; returns false when fewer
// than min_events fit.
bool place_events(SyntheticVideo& v, const CorpusConfig& cfg, const std::vector<int64_t>& symbols,
                  Rng& rng) {
    v.events.clear();
    double t = rng.uniform(0.0, cfg.gap_max_s);
    for (int64_t symbol : symbols) {
        double len = rng.uniform(cfg.event_min_s, cfg.event_max_s);
        if (t + len > v.duration_s - 0.25) break;
        v.events.push_back({symbol, t, t + len});
        t += len + rng.uniform(cfg.gap_min_s, cfg.gap_max_s);
    }
    return static_cast<int64_t>(v.events.size()) >= cfg.min_events;
}

std::vector<int64_t> caption_of(const SyntheticVideo& v, const Vocab& vocab) {
    std::vector<int64_t> c;
    for (const Event& e : v.events) c.push_back(vocab.symbol_token(e.symbol));
    return c;
}

}  // namespace

Corpus generate_corpus(const CorpusConfig& cfg, uint64_t seed) {
    cfg.validate();
    Corpus c;
    c.cfg = cfg;
    c.seed = seed;
    c.vocab = Vocab(cfg.time_buckets(), cfg.n_symbols);

    Rng root(seed);
    Rng sym_rng = root.fork(1);
    Rng struct_rng = root.fork(2);
    Rng noise_rng = root.fork(3);
    Rng twin_rng = root.fork(4);
    SymbolBank bank = make_symbols(cfg, sym_rng);

    int64_t n_twin = static_cast<int64_t>(std::floor(cfg.twin_fraction * static_cast<double>(cfg.n_videos)));
    int64_t n_base = cfg.n_videos - n_twin;

    std::set<std::vector<int64_t>> seen_captions;
    auto bucket = [&](double t_s) {
        return std::min<int64_t>(static_cast<int64_t>(t_s / cfg.time_bucket_s),
                                 c.vocab.n_time_buckets - 1);
    };

    auto finish_video = [&](SyntheticVideo& v, int64_t idx) {
        annotate(v, c.vocab);
        std::vector<int64_t> cap = caption_of(v, c.vocab);
        if (!seen_captions.insert(cap).second) ++c.duplicate_captions;
        c.captions.push_back(cap);
        std::vector<int64_t> detail;
        for (const Event& e : v.events) {
            detail.push_back(c.vocab.time_token(bucket(e.start_s)));
            detail.push_back(c.vocab.symbol_token(e.symbol));
            detail.push_back(c.vocab.time_token(bucket(e.end_s)));
        }
        c.detailed_captions.push_back(detail);
        if (v.has_qa)
            for (const Event& e : v.events) {
                double mid = 0.5 * (e.start_s + e.end_s);
                QAPair q;
                q.video = idx;
                q.question = {tok::QUERY_AT, c.vocab.time_token(bucket(mid))};
                q.answer = {c.vocab.symbol_token(e.symbol)};
                q.t_s = mid;
                c.qa.push_back(q);
            }
        if (v.has_loc)
            for (const Event& e : v.events)
                c.loc.push_back({idx, {c.vocab.symbol_token(e.symbol)}, e.start_s, e.end_s});
    };

    int64_t twins_made = 0;
    for (int64_t b = 0; b < n_base; ++b) {
        SyntheticVideo v;
        v.id = "vid" + std::to_string(c.size());
        bool placed = false;
        for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
            v.duration_s = struct_rng.uniform(cfg.duration_min_s, cfg.duration_max_s);
            int64_t k = struct_rng.uniform_int(cfg.min_events, cfg.max_events);
            std::vector<int64_t> symbols = struct_rng.sample_without_replacement(cfg.n_symbols, k);
            placed = place_events(v, cfg, symbols, struct_rng);
            // prefer globally unique captions; give up after a few redraws
            if (placed && attempt < 30) {
                std::vector<int64_t> cap = caption_of(v, c.vocab);
                if (seen_captions.count(cap)) placed = false;
            }
        }
        if (!placed) throw DataError("corpus: could not place events; config infeasible");
        render_frames(v, cfg, bank, noise_rng);
        int64_t src_idx = c.size();
        c.videos.push_back(v);
        finish_video(c.videos.back(), src_idx);

        bool want_twin = twins_made < ((b + 1) * n_twin) / n_base;
        if (want_twin && v.events.size() >= 1) {
            SyntheticVideo w = v;
            w.id = "vid" + std::to_string(c.size());
            w.twin_of = src_idx;
            int64_t e = twin_rng.uniform_int(0, static_cast<int64_t>(w.events.size()) - 1);
            int64_t old_sym = w.events[static_cast<size_t>(e)].symbol;
            std::set<int64_t> used;
            for (const Event& ev : w.events) used.insert(ev.symbol);
            int64_t new_sym = old_sym;
            for (int attempt = 0; attempt < 40; ++attempt) {
                int64_t cand = twin_rng.uniform_int(0, cfg.n_symbols - 1);
                if (used.count(cand)) continue;
                w.events[static_cast<size_t>(e)].symbol = cand;
                if (attempt < 25 && seen_captions.count(caption_of(w, c.vocab))) continue;
                new_sym = cand;
                break;
            }
            if (new_sym == old_sym) {
                w.events[static_cast<size_t>(e)].symbol = old_sym;  // no distinct symbol found
            } else {
                render_frames(w, cfg, bank, noise_rng);
                int64_t tgt_idx = c.size();
                c.videos.push_back(w);
                finish_video(c.videos.back(), tgt_idx);
                c.composed.push_back({src_idx, tgt_idx,
                                      {c.vocab.symbol_token(old_sym), tok::ARROW,
                                       c.vocab.symbol_token(new_sym)}});
                ++twins_made;
            }
        }
    }

    // Holdout boundary: never split a composed pair across the boundary.
    int64_t boundary = c.size() - cfg.holdout;
    while (boundary > 0 && boundary < c.size() &&
           c.videos[static_cast<size_t>(boundary)].twin_of == boundary - 1)
        --boundary;
    c.holdout_start = std::max<int64_t>(boundary, 0);
    return c;
}

// --------------------------------------------------------------- persistence

namespace {

constexpr uint32_t kFeaturesMagic = 0x54464C56;  // "VLFT"
constexpr uint32_t kFeaturesVersion = 1;

json config_to_json(const CorpusConfig& g) {
    return json{{"n_videos", g.n_videos},
                {"n_symbols", g.n_symbols},
                {"d_frame", g.d_frame},
                {"fps", g.fps},
                {"duration_min_s", g.duration_min_s},
                {"duration_max_s", g.duration_max_s},
                {"min_events", g.min_events},
                {"max_events", g.max_events},
                {"event_min_s", g.event_min_s},
                {"event_max_s", g.event_max_s},
                {"gap_min_s", g.gap_min_s},
                {"gap_max_s", g.gap_max_s},
                {"noise_sigma", g.noise_sigma},
                {"symbol_scale", g.symbol_scale},
                {"twin_fraction", g.twin_fraction},
                {"time_bucket_s", g.time_bucket_s},
                {"holdout", g.holdout}};
}

CorpusConfig config_from_json(const json& j) {
    CorpusConfig g;
    g.n_videos = j.at("n_videos");
    g.n_symbols = j.at("n_symbols");
    g.d_frame = j.at("d_frame");
    g.fps = j.at("fps");
    g.duration_min_s = j.at("duration_min_s");
    g.duration_max_s = j.at("duration_max_s");
    g.min_events = j.at("min_events");
    g.max_events = j.at("max_events");
    g.event_min_s = j.at("event_min_s");
    g.event_max_s = j.at("event_max_s");
    g.gap_min_s = j.at("gap_min_s");
    g.gap_max_s = j.at("gap_max_s");
    g.noise_sigma = j.at("noise_sigma");
    g.symbol_scale = j.at("symbol_scale");
    g.twin_fraction = j.at("twin_fraction");
    g.time_bucket_s = j.at("time_bucket_s");
    g.holdout = j.at("holdout");
    return g;
}

}  // namespace

void save_corpus(const Corpus& c, const std::string& dir) {
    ensure_dir(dir);

    BinWriter fw(dir + "/features.bin");
    fw.u32(kFeaturesMagic);
    fw.u32(kFeaturesVersion);
    fw.u64(static_cast<uint64_t>(c.size()));
    for (const auto& v : c.videos) {
        fw.u64(v.frames.size());
        fw.u64(static_cast<uint64_t>(c.cfg.d_frame));
        for (const auto& f : v.frames)
            for (double x : f) fw.f32(static_cast<float>(x));
    }
    fw.u32(crc32_of(fw.buffer().data(), fw.buffer().size()));
    fw.commit();

    json j;
    j["manifest_version"] = 1;
    j["config"] = config_to_json(c.cfg);
    j["seed"] = c.seed;
    j["vocab"] = {{"time_buckets", c.vocab.n_time_buckets}, {"symbols", c.vocab.n_symbols}};
    j["holdout_start"] = c.holdout_start;
    j["duplicate_captions"] = c.duplicate_captions;
    json vids = json::array();
    for (int64_t i = 0; i < c.size(); ++i) {
        const auto& v = c.videos[static_cast<size_t>(i)];
        json e = json::array();
        for (const auto& ev : v.events) e.push_back({{"s", ev.symbol}, {"a", ev.start_s}, {"b", ev.end_s}});
        vids.push_back({{"id", v.id},
                        {"duration_s", v.duration_s},
                        {"n_frames", v.frames.size()},
                        {"events", e},
                        {"keywords", v.keywords},
                        {"has_qa", v.has_qa},
                        {"has_loc", v.has_loc},
                        {"twin_of", v.twin_of},
                        {"caption", c.captions[static_cast<size_t>(i)]},
                        {"detailed_caption", c.detailed_captions[static_cast<size_t>(i)]}});
    }
    j["videos"] = std::move(vids);
    json qa = json::array();
    for (const auto& q : c.qa)
        qa.push_back({{"video", q.video}, {"q", q.question}, {"a", q.answer}, {"t_s", q.t_s}});
    j["qa"] = std::move(qa);
    json loc = json::array();
    for (const auto& l : c.loc)
        loc.push_back({{"video", l.video}, {"text", l.text}, {"a", l.start_s}, {"b", l.end_s}});
    j["loc"] = std::move(loc);
    json comp = json::array();
    for (const auto& t : c.composed)
        comp.push_back({{"source", t.source}, {"target", t.target}, {"change", t.change_text}});
    j["composed"] = std::move(comp);

    write_text_file_atomic(dir + "/manifest.json", j.dump(1) + "\n");
}

Corpus load_corpus(const std::string& dir) {
    json j;
    try {
        j = json::parse(read_text_file(dir + "/manifest.json"));
    } catch (const json::exception& e) {
        throw DataError("corpus manifest: " + std::string(e.what()));
    }
    Corpus c;
    try {
        if (j.at("manifest_version") != 1) throw VersionError("corpus manifest: unsupported version");
        c.cfg = config_from_json(j.at("config"));
        c.seed = j.at("seed");
        c.vocab = Vocab(j.at("vocab").at("time_buckets"), j.at("vocab").at("symbols"));
        c.holdout_start = j.at("holdout_start");
        c.duplicate_captions = j.at("duplicate_captions");
        for (const auto& v : j.at("videos")) {
            SyntheticVideo sv;
            sv.id = v.at("id");
            sv.duration_s = v.at("duration_s");
            for (const auto& e : v.at("events")) {
                Event ev;
                ev.symbol = e.at("s").get<int64_t>();
                ev.start_s = e.at("a").get<double>();
                ev.end_s = e.at("b").get<double>();
                sv.events.push_back(ev);
            }
            sv.keywords = v.at("keywords").get<std::vector<std::string>>();
            sv.has_qa = v.at("has_qa");
            sv.has_loc = v.at("has_loc");
            sv.twin_of = v.at("twin_of");
            sv.frames.resize(v.at("n_frames").get<size_t>());
            c.videos.push_back(std::move(sv));
            c.captions.push_back(v.at("caption").get<std::vector<int64_t>>());
            c.detailed_captions.push_back(v.at("detailed_caption").get<std::vector<int64_t>>());
        }
        for (const auto& q : j.at("qa")) {
            QAPair p;
            p.video = q.at("video");
            p.question = q.at("q").get<std::vector<int64_t>>();
            p.answer = q.at("a").get<std::vector<int64_t>>();
            p.t_s = q.at("t_s");
            c.qa.push_back(std::move(p));
        }
        for (const auto& l : j.at("loc")) {
            LocAnnotation a;
            a.video = l.at("video").get<int64_t>();
            a.text = l.at("text").get<std::vector<int64_t>>();
            a.start_s = l.at("a").get<double>();
            a.end_s = l.at("b").get<double>();
            c.loc.push_back(std::move(a));
        }
        for (const auto& t : j.at("composed")) {
            ComposedTriplet ct;
            ct.source = t.at("source").get<int64_t>();
            ct.target = t.at("target").get<int64_t>();
            ct.change_text = t.at("change").get<std::vector<int64_t>>();
            c.composed.push_back(std::move(ct));
        }
    } catch (const json::exception& e) {
        throw DataError("corpus manifest: " + std::string(e.what()));
    }

    BinReader fr(dir + "/features.bin");
    if (fr.buffer().size() < 4) throw DataError("features.bin: too short");
    uint32_t stored_crc = 0;
    {
        size_t n = fr.buffer().size();
        for (int i = 0; i < 4; ++i) stored_crc |= static_cast<uint32_t>(fr.buffer()[n - 4 + i]) << (8 * i);
        uint32_t actual = crc32_of(fr.buffer().data(), n - 4);
        if (actual != stored_crc) throw IntegrityError("features.bin: checksum mismatch");
    }
    if (fr.u32() != kFeaturesMagic) throw DataError("features.bin: bad magic");
    if (fr.u32() != kFeaturesVersion) throw VersionError("features.bin: unsupported version");
    uint64_t n_videos = fr.u64();
    if (n_videos != static_cast<uint64_t>(c.size()))
        throw IntegrityError("features.bin: video count mismatch with manifest");
    for (auto& v : c.videos) {
        uint64_t n_frames = fr.u64();
        uint64_t d = fr.u64();
        if (d != static_cast<uint64_t>(c.cfg.d_frame))
            throw IntegrityError("features.bin: frame width mismatch");
        if (n_frames != v.frames.size())
            throw IntegrityError("features.bin: frame count mismatch for " + v.id);
        for (auto& f : v.frames) {
            f.resize(static_cast<size_t>(d));
            for (auto& x : f) x = static_cast<double>(fr.f32());
        }
    }
    return c;
}

std::string corpus_checksum(const std::string& dir) {
    std::string manifest = read_text_file(dir + "/manifest.json");
    BinReader fr(dir + "/features.bin");
    char buf[32];
    std::snprintf(buf, sizeof buf, "crc32:%08x-%08x",
                  crc32_of(manifest.data(), manifest.size()),
                  crc32_of(fr.buffer().data(), fr.buffer().size()));
    return buf;
}

// ------------------------------------------------------------------- helpers

std::vector<std::vector<double>> frames_in_span(const SyntheticVideo& v, const Span& span,
                                                double fps) {
    std::vector<std::vector<double>> out;
    for (size_t t = 0; t < v.frames.size(); ++t) {
        double center = (static_cast<double>(t) + 0.5) / fps;
        if (center >= span.first && center < span.second) out.push_back(v.frames[t]);
    }
    if (out.empty() && !v.frames.empty()) {
        auto idx = static_cast<size_t>(std::clamp<double>(std::floor(span.first * fps), 0.0,
                                                          static_cast<double>(v.frames.size() - 1)));
        out.push_back(v.frames[idx]);
    }
    return out;
}

std::vector<int64_t> span_caption(const SyntheticVideo& v, const Span& span, const Vocab& vocab) {
    std::vector<int64_t> out;
    for (const Event& e : v.events) {
        double inter = std::min(e.end_s, span.second) - std::max(e.start_s, span.first);
        double len = e.end_s - e.start_s;
        if (len > 0 && inter >= 0.5 * len) out.push_back(vocab.symbol_token(e.symbol));
    }
    return out;
}

std::vector<std::vector<double>> sparse_frames(const SyntheticVideo& v, int64_t count) {
    if (count < 1) throw ArgumentError("sparse_frames: count must be >= 1");
    int64_t n = static_cast<int64_t>(v.frames.size());
    if (n == 0) throw DataError("sparse_frames: video has no frames");
    std::vector<std::vector<double>> out;
    if (n <= count) {
        out = v.frames;
    } else {
        for (int64_t i = 0; i < count; ++i) {
            auto idx = static_cast<size_t>((i * n) / count);
            out.push_back(v.frames[idx]);
        }
    }
    return out;
}

// ------------------------------------------------------------------ balancing

std::vector<int64_t> balance_by_keyword(const std::vector<KeywordRecord>& records,
                                        int64_t min_occurrences, int64_t cap) {
    if (min_occurrences < 1) throw ArgumentError("balance_by_keyword: min_occurrences must be >= 1");
    if (cap < 1) throw ArgumentError("balance_by_keyword: cap must be >= 1");
    std::map<std::string, int64_t> freq;
    for (const auto& r : records)
        for (const auto& kw : r.keywords) ++freq[kw];

    std::vector<std::string> order;
    for (const auto& [kw, n] : freq)
        if (n >= min_occurrences) order.push_back(kw);
    std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
        if (freq[a] != freq[b]) return freq[a] > freq[b];
        return a < b;
    });

    std::map<std::string, int64_t> selected_count;
    std::set<int64_t> selected;
    std::vector<int64_t> out;
    for (const auto& kw : order) {
        for (const auto& r : records) {
            if (selected_count[kw] >= cap) break;
            bool carries = false;
            for (const auto& k2 : r.keywords)
                if (k2 == kw) { carries = true; break; }
            if (!carries || selected.count(r.id)) continue;
            selected.insert(r.id);
            out.push_back(r.id);
            for (const auto& k2 : r.keywords) ++selected_count[k2];
        }
    }
    return out;
}

// --------------------------------------------------------------------- mining

std::vector<Span> mine_hard_negatives(double duration_s, const Span& positive,
                                      const WindowConfig& wcfg, int64_t count, double max_iou,
                                      Rng& rng) {
    if (count < 1) throw ArgumentError("mine_hard_negatives: count must be >= 1");
    if (max_iou <= 0 || max_iou > 1) throw ArgumentError("mine_hard_negatives: bad max_iou");
    std::vector<Span> windows = window_clips(duration_s, wcfg);
    std::vector<Span> pool;
    for (const Span& w : windows)
        if (interval_iou(w, positive) < max_iou) pool.push_back(w);
    if (static_cast<int64_t>(pool.size()) < count)
        throw MiningError("mine_hard_negatives: only " + std::to_string(pool.size()) +
                          " windows under IoU " + std::to_string(max_iou) + ", need " +
                          std::to_string(count));
    std::vector<int64_t> idx = rng.sample_without_replacement(static_cast<int64_t>(pool.size()), count);
    std::vector<Span> out;
    for (int64_t i : idx) out.push_back(pool[static_cast<size_t>(i)]);
    return out;
}

}  // namespace ville
