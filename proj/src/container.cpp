#include "mmt/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <sstream>

#include "mmt/errors.hpp"
#include "mmt/util.hpp"

namespace mmt {

namespace {

constexpr const char* kMagic = "MMTC1";

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '/' || c == '-';
        if (!ok) return false;
    }
    return true;
}

void append_f32_le(std::string& out, float v) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    out.push_back(static_cast<char>(u & 0xFF));
    out.push_back(static_cast<char>((u >> 8) & 0xFF));
    out.push_back(static_cast<char>((u >> 16) & 0xFF));
    out.push_back(static_cast<char>((u >> 24) & 0xFF));
}

float read_f32_le(const std::string& s, std::size_t pos) {
    std::uint32_t u = 0;
    for (int i = 3; i >= 0; --i)
        u = (u << 8) | static_cast<std::uint8_t>(s[pos + static_cast<std::size_t>(i)]);
    return std::bit_cast<float>(u);
}

long parse_long(const std::string& tok, const char* what) {
    try {
        std::size_t used = 0;
        const long v = std::stol(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError(std::string("bad integer in container header (") + what + "): " + tok, 0);
    }
}

}  // namespace

std::size_t NamedArray::count() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

void Container::set_meta(const std::string& key, const std::string& value) {
    if (!valid_name(key)) throw DomainError("invalid container meta key: " + key);
    if (value.find('\n') != std::string::npos)
        throw DomainError("container meta value must not contain newlines: " + key);
    for (auto& kv : metas_) {
        if (kv.first == key) {
            kv.second = value;
            return;
        }
    }
    metas_.emplace_back(key, value);
}

bool Container::has_meta(const std::string& key) const {
    for (const auto& kv : metas_)
        if (kv.first == key) return true;
    return false;
}

const std::string& Container::meta(const std::string& key) const {
    for (const auto& kv : metas_)
        if (kv.first == key) return kv.second;
    throw DomainError("container meta key not found: " + key);
}

void Container::add(NamedArray array) {
    if (!valid_name(array.name)) throw DomainError("invalid container array name: " + array.name);
    if (find(array.name) != nullptr)
        throw DomainError("duplicate container array name: " + array.name);
    if (array.shape.empty()) throw DomainError("container array has empty shape: " + array.name);
    for (int d : array.shape)
        if (d <= 0) throw DomainError("container array has nonpositive dim: " + array.name);
    if (array.count() != array.data.size())
        throw DomainError("container array shape/data mismatch: " + array.name);
    arrays_.push_back(std::move(array));
}

void Container::add(const std::string& name, std::vector<int> shape, std::vector<float> data) {
    add(NamedArray{name, std::move(shape), std::move(data)});
}

const NamedArray* Container::find(const std::string& name) const {
    for (const auto& a : arrays_)
        if (a.name == name) return &a;
    return nullptr;
}

const NamedArray& Container::get(const std::string& name) const {
    const NamedArray* a = find(name);
    if (a == nullptr) throw DomainError("container array not found: " + name);
    return *a;
}

std::string Container::serialize() const {
    std::string header;
    header += kMagic;
    header += '\n';
    for (const auto& kv : metas_) header += "meta " + kv.first + " " + kv.second + "\n";
    std::size_t offset = 0;
    for (const auto& a : arrays_) {
        header += "array " + a.name + " " + std::to_string(a.shape.size());
        for (int d : a.shape) header += " " + std::to_string(d);
        header += " " + std::to_string(offset) + "\n";
        offset += a.data.size() * 4;
    }
    header += "end\n";

    std::string out = header;
    out.reserve(header.size() + offset);
    for (const auto& a : arrays_)
        for (float v : a.data) append_f32_le(out, v);
    return out;
}

Container Container::deserialize(const std::string& bytes) {
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        const std::size_t nl = bytes.find('\n', pos);
        if (nl == std::string::npos) throw ParseError("container header truncated", pos);
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };

    if (next_line() != kMagic) throw ParseError("bad container magic", 0);

    Container c;
    struct Entry {
        std::size_t index;
        std::size_t offset;
    };
    std::vector<Entry> entries;
    std::size_t expected_offset = 0;
    for (;;) {
        const std::size_t line_start = pos;
        const std::string line = next_line();
        if (line == "end") break;
        const std::vector<std::string> tok = split(line, ' ');
        if (tok.size() >= 3 && tok[0] == "meta") {
            const std::size_t vstart = line.find(' ', line.find(' ') + 1) + 1;
            c.set_meta(tok[1], line.substr(vstart));
        } else if (tok.size() == 2 && tok[0] == "meta") {
            c.set_meta(tok[1], "");
        } else if (tok.size() >= 4 && tok[0] == "array") {
            const long rank = parse_long(tok[2], "rank");
            if (rank < 1 || tok.size() != 4 + static_cast<std::size_t>(rank))
                throw ParseError("malformed container array line: " + line, line_start);
            NamedArray a;
            a.name = tok[1];
            std::size_t count = 1;
            for (long i = 0; i < rank; ++i) {
                const long d = parse_long(tok[3 + static_cast<std::size_t>(i)], "dim");
                if (d <= 0) throw ParseError("nonpositive dim in container header", line_start);
                a.shape.push_back(static_cast<int>(d));
                count *= static_cast<std::size_t>(d);
            }
            const long offset = parse_long(tok.back(), "offset");
            if (static_cast<std::size_t>(offset) != expected_offset)
                throw ParseError("container array offset out of order: " + a.name, line_start);
            entries.push_back({c.arrays_.size(), static_cast<std::size_t>(offset)});
            a.data.assign(count, 0.0f);
            c.arrays_.push_back(std::move(a));
            expected_offset += count * 4;
        } else {
            throw ParseError("unrecognized container header line: " + line, line_start);
        }
    }

    const std::size_t payload = bytes.size() - pos;
    if (payload != expected_offset)
        throw ParseError("container payload size mismatch", pos);
    for (const Entry& e : entries) {
        NamedArray& a = c.arrays_[e.index];
        const std::size_t base = pos + e.offset;
        for (std::size_t i = 0; i < a.data.size(); ++i)
            a.data[i] = read_f32_le(bytes, base + i * 4);
    }
    return c;
}

void Container::save(const std::string& path) const { write_file(path, serialize()); }

Container Container::load(const std::string& path) { return deserialize(read_file(path)); }

}  // namespace mmt
