#include "smile/binary_io.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "smile/errors.hpp"

namespace smile {

std::uint32_t crc32(std::span<const std::uint8_t> bytes)
{
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large buffers in chunks.
    constexpr std::size_t kChunk = 1u << 30;
    for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
        const std::size_t n = std::min(kChunk, bytes.size() - off);
        crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    }
    return static_cast<std::uint32_t>(crc);
}

void ByteWriter::bytes(std::span<const std::uint8_t> data)
{
    m_buf.insert(m_buf.end(), data.begin(), data.end());
}

void ByteWriter::text(std::string_view s)
{
    m_buf.insert(m_buf.end(), s.begin(), s.end());
}

void ByteWriter::u8(std::uint8_t v)
{
    m_buf.push_back(v);
}

void ByteWriter::u16(std::uint16_t v)
{
    for (int i = 0; i < 2; ++i) {
        m_buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::u32(std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) {
        m_buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::u64(std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) {
        m_buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::f32(float v)
{
    u32(std::bit_cast<std::uint32_t>(v));
}

void ByteWriter::f64(double v)
{
    u64(std::bit_cast<std::uint64_t>(v));
}

void ByteWriter::seal()
{
    u32(crc32(m_buf));
}

ByteReader::ByteReader(std::span<const std::uint8_t> data)
  : m_data(data), m_end(data.size() >= 4 ? data.size() - 4 : 0)
{
    if (data.size() < 4) {
        throw FormatError(FormatErrorKind::truncated, "file too short to hold a checksum");
    }
}

std::span<const std::uint8_t> ByteReader::take(std::size_t n)
{
    if (n > m_end - m_pos) {
        throw FormatError(FormatErrorKind::truncated, "unexpected end of file at byte " + std::to_string(m_pos));
    }
    auto out = m_data.subspan(m_pos, n);
    m_pos += n;
    return out;
}

std::string ByteReader::text(std::size_t n)
{
    const auto s = take(n);
    return {s.begin(), s.end()};
}

std::uint8_t ByteReader::u8()
{
    return take(1)[0];
}

std::uint16_t ByteReader::u16()
{
    const auto s = take(2);
    return static_cast<std::uint16_t>(s[0] | (s[1] << 8));
}

std::uint32_t ByteReader::u32()
{
    const auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
        v = (v << 8) | s[i];
    }
    return v;
}

std::uint64_t ByteReader::u64()
{
    const auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | s[i];
    }
    return v;
}

float ByteReader::f32()
{
    return std::bit_cast<float>(u32());
}

double ByteReader::f64()
{
    return std::bit_cast<double>(u64());
}

void ByteReader::finish() const
{
    if (m_pos != m_end) {
        throw FormatError(FormatErrorKind::malformed,
                          std::to_string(m_end - m_pos) + " unexpected bytes before the checksum");
    }
    const auto trailer = m_data.subspan(m_end, 4);
    const std::uint32_t stored = static_cast<std::uint32_t>(trailer[0]) | (static_cast<std::uint32_t>(trailer[1]) << 8)
                                 | (static_cast<std::uint32_t>(trailer[2]) << 16)
                                 | (static_cast<std::uint32_t>(trailer[3]) << 24);
    if (stored != crc32(m_data.first(m_end))) {
        throw FormatError(FormatErrorKind::checksum_mismatch, "CRC32 checksum mismatch");
    }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path.string() + "' for reading");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

}  // namespace smile
