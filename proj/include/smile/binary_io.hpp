#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace smile {

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Little-endian byte sink.
class ByteWriter {
public:
    void bytes(std::span<const std::uint8_t> data);
    void text(std::string_view s);
    void u8(std::uint8_t v);
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    /// Appends the CRC32 of everything written so far.
    void seal();

    const std::vector<std::uint8_t>& buffer() const noexcept { return m_buf; }
    std::vector<std::uint8_t> release() { return std::move(m_buf); }

private:
    std::vector<std::uint8_t> m_buf;
};

/// Little-endian reader over a buffer whose last four bytes are a CRC32
/// trailer. Reads never reach into the trailer; running out of payload raises
/// a truncated-file FormatError.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data);

    std::string text(std::size_t n);
    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();

    std::size_t remaining() const noexcept { return m_end - m_pos; }
    /// Requires the payload to be fully consumed and the trailer to match.
    void finish() const;

private:
    std::span<const std::uint8_t> take(std::size_t n);

    std::span<const std::uint8_t> m_data;
    std::size_t m_pos = 0;
    std::size_t m_end = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace smile
