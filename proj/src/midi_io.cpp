#include "mmt/midi_io.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmt/errors.hpp"
#include "mmt/util.hpp"

namespace mmt {

namespace {

constexpr int kWriteTpq = 480;
constexpr int kDrumChannel = 9;
constexpr std::uint8_t kVelocity = 64;
constexpr std::uint32_t kMicrosPerQuarter = 500000;  // 120 BPM

// --- reading ---------------------------------------------------------------

class ByteReader {
public:
    ByteReader(const std::string& data, std::size_t pos) : data_(&data), pos_(pos) {}

    std::size_t pos() const { return pos_; }
    bool at_end(std::size_t limit) const { return pos_ >= limit; }

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>((*data_)[pos_++]);
    }
    std::uint8_t peek() const {
        if (pos_ >= data_->size()) throw ParseError("unexpected end of file", pos_);
        return static_cast<std::uint8_t>((*data_)[pos_]);
    }
    std::uint16_t u16() {
        need(2);
        const auto hi = static_cast<std::uint8_t>((*data_)[pos_]);
        const auto lo = static_cast<std::uint8_t>((*data_)[pos_ + 1]);
        pos_ += 2;
        return static_cast<std::uint16_t>((hi << 8) | lo);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v = (v << 8) | static_cast<std::uint8_t>((*data_)[pos_ + static_cast<std::size_t>(i)]);
        pos_ += 4;
        return v;
    }
    std::uint32_t vlq() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            const std::uint8_t b = u8();
            v = (v << 7) | (b & 0x7F);
            if (!(b & 0x80)) return v;
        }
        throw ParseError("variable-length quantity longer than 4 bytes", pos_);
    }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_->substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_->size()) throw ParseError("unexpected end of file", pos_);
    }

    const std::string* data_;
    std::size_t pos_;
};

struct RawNote {
    long onset_tick;
    long off_tick;
    int pitch;
    int program;
    int channel;
};

// Round half up of tick * 12 / tpq.
int rescale_tick(long tick, int tpq) {
    const long num = tick * 2 * kResolution + tpq;
    return static_cast<int>(num / (2L * tpq));
}

void parse_track(ByteReader& r, std::size_t end, std::vector<RawNote>& out) {
    std::array<int, 16> program{};  // per-channel program state, local to the track
    // Active note-ons per (channel, pitch), FIFO paired with note-offs.
    std::map<std::pair<int, int>, std::vector<std::size_t>> active;
    std::vector<RawNote> notes;

    long tick = 0;
    std::uint8_t running_status = 0;
    while (!r.at_end(end)) {
        tick += r.vlq();
        std::uint8_t status = r.peek();
        if (status & 0x80) {
            r.skip(1);
            if (status < 0xF0) running_status = status;
        } else {
            if (!(running_status & 0x80))
                throw ParseError("data byte without running status", r.pos());
            status = running_status;
        }

        if (status == 0xFF) {  // meta
            const std::uint8_t type = r.u8();
            const std::uint32_t len = r.vlq();
            r.skip(len);
            if (type == 0x2F) break;  // end of track
            continue;
        }
        if (status == 0xF0 || status == 0xF7) {  // sysex
            const std::uint32_t len = r.vlq();
            r.skip(len);
            continue;
        }

        const int kind = status >> 4;
        const int channel = status & 0x0F;
        switch (kind) {
            case 0x8:    // note off
            case 0x9: {  // note on
                const int pitch = r.u8() & 0x7F;
                const int velocity = r.u8() & 0x7F;
                const bool is_on = (kind == 0x9) && velocity > 0;
                if (is_on) {
                    RawNote n{tick, -1, pitch, program[static_cast<std::size_t>(channel)],
                              channel};
                    active[{channel, pitch}].push_back(notes.size());
                    notes.push_back(n);
                } else {
                    auto& stack = active[{channel, pitch}];
                    if (!stack.empty()) {
                        notes[stack.front()].off_tick = tick;
                        stack.erase(stack.begin());
                    }
                    // unmatched note-off: ignore
                }
                break;
            }
            case 0xA:  // polyphonic aftertouch
            case 0xB:  // controller
            case 0xE:  // pitch bend
                r.skip(2);
                break;
            case 0xC:  // program change
                program[static_cast<std::size_t>(channel)] = r.u8() & 0x7F;
                break;
            case 0xD:  // channel aftertouch
                r.skip(1);
                break;
            default:
                throw ParseError("unexpected status byte", r.pos());
        }
    }

    for (const RawNote& n : notes) {
        if (n.off_tick < 0) continue;  // never released; drop
        out.push_back(n);
    }
}

// --- writing ---------------------------------------------------------------

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8)
        out.push_back(static_cast<char>((v >> shift) & 0xFF));
}

void put_vlq(std::string& out, std::uint32_t v) {
    char buf[4];
    int n = 0;
    do {
        buf[n++] = static_cast<char>(v & 0x7F);
        v >>= 7;
    } while (v && n < 4);
    for (int i = n - 1; i > 0; --i) out.push_back(static_cast<char>(buf[i] | 0x80));
    out.push_back(buf[0]);
}

void put_chunk(std::string& out, const char* tag, const std::string& body) {
    out.append(tag, 4);
    put_u32(out, static_cast<std::uint32_t>(body.size()));
    out.append(body);
}

struct TrackEvent {
    long tick;
    int order;  // note-offs sort before note-ons at the same tick
    std::string bytes;
};

std::string render_track(std::vector<TrackEvent> events) {
    std::stable_sort(events.begin(), events.end(), [](const TrackEvent& a, const TrackEvent& b) {
        return std::tie(a.tick, a.order) < std::tie(b.tick, b.order);
    });
    std::string body;
    long tick = 0;
    for (const TrackEvent& e : events) {
        put_vlq(body, static_cast<std::uint32_t>(e.tick - tick));
        tick = e.tick;
        body.append(e.bytes);
    }
    put_vlq(body, 0);
    body.append("\xFF\x2F\x00", 3);  // end of track
    return body;
}

}  // namespace

MusicScore load_midi(const std::string& path) {
    const std::string data = read_file(path);
    ByteReader r(data, 0);

    if (data.size() < 14 || data.compare(0, 4, "MThd") != 0)
        throw ParseError("missing MThd header", 0);
    r.skip(4);
    const std::uint32_t header_len = r.u32();
    if (header_len < 6) throw ParseError("bad MThd length", r.pos());
    const std::uint16_t format = r.u16();
    const std::uint16_t n_tracks = r.u16();
    const std::uint16_t division = r.u16();
    r.skip(header_len - 6);
    if (format > 1) throw ParseError("unsupported SMF format " + std::to_string(format), 8);
    if (division & 0x8000) throw ParseError("SMPTE time division not supported", 12);
    const int tpq = division;
    if (tpq == 0) throw ParseError("zero ticks per quarter", 12);

    std::vector<RawNote> raw;
    int tracks_seen = 0;
    while (r.pos() + 8 <= data.size()) {
        const std::size_t chunk_at = r.pos();
        const std::string tag = r.bytes(4);
        const std::uint32_t len = r.u32();
        if (r.pos() + len > data.size())
            throw ParseError("chunk length exceeds file size", chunk_at);
        const std::size_t end = r.pos() + len;
        if (tag == "MTrk") {
            parse_track(r, end, raw);
            ++tracks_seen;
        }
        r = ByteReader(data, end);
    }
    if (tracks_seen != n_tracks)
        throw ParseError("track count mismatch: header says " + std::to_string(n_tracks) +
                             ", found " + std::to_string(tracks_seen),
                         10);

    MusicScore score;
    for (const RawNote& n : raw) {
        if (n.channel == kDrumChannel) continue;
        Note note;
        note.onset = rescale_tick(n.onset_tick, tpq);
        note.duration = std::max(1, rescale_tick(n.off_tick, tpq) - note.onset);
        note.pitch = n.pitch;
        note.program = n.program;
        score.notes.push_back(note);
    }
    if (score.notes.empty()) throw EmptyScoreError("no non-drum notes in " + path);
    std::stable_sort(score.notes.begin(), score.notes.end(), note_less);
    return score;
}

void save_midi(const MusicScore& score, const std::string& path) {
    validate(score);

    // Conductor track: tempo only.
    std::vector<TrackEvent> conductor;
    {
        std::string tempo("\xFF\x51\x03", 3);
        tempo.push_back(static_cast<char>((kMicrosPerQuarter >> 16) & 0xFF));
        tempo.push_back(static_cast<char>((kMicrosPerQuarter >> 8) & 0xFF));
        tempo.push_back(static_cast<char>(kMicrosPerQuarter & 0xFF));
        conductor.push_back({0, 0, tempo});
    }

    std::map<int, std::vector<const Note*>> by_program;
    for (const Note& n : score.notes) by_program[n.program].push_back(&n);

    std::string out;
    out.reserve(64 + 16 * score.notes.size());
    put_chunk(out, "MThd", [&] {
        std::string h;
        put_u16(h, 1);  // format 1
        put_u16(h, static_cast<std::uint16_t>(1 + by_program.size()));
        put_u16(h, kWriteTpq);
        return h;
    }());
    put_chunk(out, "MTrk", render_track(std::move(conductor)));

    const int ticks_per_step = kWriteTpq / kResolution;
    int track_index = 0;
    for (const auto& [program, notes] : by_program) {
        int channel = track_index % 15;
        if (channel >= kDrumChannel) ++channel;  // never write to the drum channel
        ++track_index;

        std::vector<TrackEvent> events;
        {
            std::string pc;
            pc.push_back(static_cast<char>(0xC0 | channel));
            pc.push_back(static_cast<char>(program));
            events.push_back({0, 0, pc});
        }
        for (const Note* n : notes) {
            const long on = static_cast<long>(n->onset) * ticks_per_step;
            const long off = on + static_cast<long>(n->duration) * ticks_per_step;
            std::string on_bytes;
            on_bytes.push_back(static_cast<char>(0x90 | channel));
            on_bytes.push_back(static_cast<char>(n->pitch));
            on_bytes.push_back(static_cast<char>(kVelocity));
            std::string off_bytes;
            off_bytes.push_back(static_cast<char>(0x80 | channel));
            off_bytes.push_back(static_cast<char>(n->pitch));
            off_bytes.push_back(static_cast<char>(0));
            events.push_back({on, 2, std::move(on_bytes)});
            events.push_back({off, 1, std::move(off_bytes)});
        }
        put_chunk(out, "MTrk", render_track(std::move(events)));
    }

    write_file(path, out);
}

}  // namespace mmt
