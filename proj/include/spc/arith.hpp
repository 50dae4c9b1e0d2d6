#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

namespace spc {

//============================================================================
// Adaptive binary arithmetic coder: 32-bit interval with bit-plus-follow
// renormalization (no carries), 16-bit probabilities.

// Probability of a 1 bit, adapted with rate 1 / (n + 2) for the first
// kMaxCount observations and fixed afterwards.
class BitModel {
public:
  static constexpr int kBits = 16;
  static constexpr uint32_t kOne = 1u << kBits;
  static constexpr uint32_t kMin = 32;
  static constexpr int kMaxCount = 254;

  uint32_t p1() const { return p1_; }
  void update(int bit);

private:
  uint32_t p1_ = kOne / 2;
  int count_ = 0;
};

class ArithEncoder {
public:
  void encode(int bit, BitModel& model);
  // Bits with probability 1/2, no adaptation.
  void encode_raw(uint32_t value, int nbits);
  // Flushes the interval; the encoder must not be used afterwards.
  std::vector<uint8_t> finish();
  size_t bits_written() const { return nbits_; }

private:
  void put(int bit);
  void emit(int bit);
  void code(int bit, uint32_t p1);

  uint64_t low_ = 0;
  uint64_t high_ = 0xffffffffu;
  uint64_t pending_ = 0;
  std::vector<uint8_t> out_;
  uint8_t acc_ = 0;
  int nacc_ = 0;
  size_t nbits_ = 0;
  bool finished_ = false;
};

class ArithDecoder {
public:
  // `base_offset` is added to the byte offsets reported in errors.
  explicit ArithDecoder(std::span<const uint8_t> data, int64_t base_offset = 0);

  int decode(BitModel& model);
  uint32_t decode_raw(int nbits);

  // Byte position of the next unread input bit.
  int64_t offset() const { return base_ + int64_t(pos_ / 8); }

private:
  int next_bit();
  int code(uint32_t p1);
  [[noreturn]] void exhausted() const;
  [[noreturn]] static void used_after_finish();

  std::span<const uint8_t> data_;
  int64_t base_;
  size_t pos_ = 0;   // in bits
  uint64_t low_ = 0;
  uint64_t high_ = 0xffffffffu;
  uint64_t value_ = 0;

  friend class ArithEncoder;
};

// Shannon bound n * H(p_hat) in bits for a bit sequence.
double shannon_bits(std::span<const int> bits);

//============================================================================
// Hot paths, inline.

namespace arith_detail {

  constexpr uint64_t kHalf = 0x80000000u;
  constexpr uint64_t kQuarter = 0x40000000u;
  constexpr uint64_t kThreeQuarters = 0xc0000000u;

  // ceil(2^32 / d) for d = n + 2; the product with any |x| <= 2^16 gives
  // exactly floor(|x| / d).
  struct Reciprocals {
    uint64_t r[BitModel::kMaxCount + 1];
    constexpr Reciprocals() : r()
    {
      for (int n = 0; n <= BitModel::kMaxCount; ++n)
        r[n] = ((uint64_t(1) << 32) + uint64_t(n + 2) - 1) / uint64_t(n + 2);
    }
  };
  inline constexpr Reciprocals kRecip;

  // Upper end of the 0-interval.
  inline uint64_t
  split(uint64_t low, uint64_t high, uint32_t p1)
  {
    uint64_t range = high - low + 1;
    uint64_t p0 = BitModel::kOne - p1;
    return low + ((range * p0) >> BitModel::kBits) - 1;
  }

}  // namespace arith_detail

inline void
BitModel::update(int bit)
{
  // p += (target - p) / (n + 2), truncating toward zero
  int target = bit ? int(kOne) : 0;
  int p = int(p1_);
  int diff = target - p;
  int step = int((uint64_t(diff < 0 ? -diff : diff) * arith_detail::kRecip.r[count_]) >> 32);
  p += diff < 0 ? -step : step;
  p1_ = uint32_t(std::clamp(p, int(kMin), int(kOne - kMin)));
  if (count_ < kMaxCount)
    ++count_;
}

inline void
ArithEncoder::put(int bit)
{
  acc_ = uint8_t(acc_ << 1 | bit);
  ++nbits_;
  if (++nacc_ == 8) {
    out_.push_back(acc_);
    acc_ = 0;
    nacc_ = 0;
  }
}

inline void
ArithEncoder::emit(int bit)
{
  put(bit);
  for (; pending_ > 0; --pending_)
    put(!bit);
}

inline void
ArithEncoder::code(int bit, uint32_t p1)
{
  using namespace arith_detail;
  if (finished_)
    ArithDecoder::used_after_finish();
  uint64_t mid = split(low_, high_, p1);
  if (bit)
    low_ = mid + 1;
  else
    high_ = mid;
  for (;;) {
    if (high_ < kHalf) {
      emit(0);
    } else if (low_ >= kHalf) {
      emit(1);
      low_ -= kHalf;
      high_ -= kHalf;
    } else if (low_ >= kQuarter && high_ < kThreeQuarters) {
      ++pending_;
      low_ -= kQuarter;
      high_ -= kQuarter;
    } else {
      break;
    }
    low_ = 2 * low_;
    high_ = 2 * high_ + 1;
  }
}

inline void
ArithEncoder::encode(int bit, BitModel& model)
{
  code(bit, model.p1());
  model.update(bit);
}

inline int
ArithDecoder::next_bit()
{
  // Past the end the stream reads as zeros; a valid stream never needs more
  // than the 32 bits of lookahead beyond its last byte.
  size_t avail = data_.size() * 8;
  if (pos_ < avail) {
    int bit = data_[pos_ / 8] >> (7 - pos_ % 8) & 1;
    ++pos_;
    return bit;
  }
  if (pos_ >= avail + 32)
    exhausted();
  ++pos_;
  return 0;
}

inline int
ArithDecoder::code(uint32_t p1)
{
  using namespace arith_detail;
  uint64_t mid = split(low_, high_, p1);
  int bit;
  if (value_ > mid) {
    bit = 1;
    low_ = mid + 1;
  } else {
    bit = 0;
    high_ = mid;
  }
  for (;;) {
    if (high_ < kHalf) {
    } else if (low_ >= kHalf) {
      low_ -= kHalf;
      high_ -= kHalf;
      value_ -= kHalf;
    } else if (low_ >= kQuarter && high_ < kThreeQuarters) {
      low_ -= kQuarter;
      high_ -= kQuarter;
      value_ -= kQuarter;
    } else {
      break;
    }
    low_ = 2 * low_;
    high_ = 2 * high_ + 1;
    value_ = 2 * value_ + uint64_t(next_bit());
  }
  return bit;
}

inline int
ArithDecoder::decode(BitModel& model)
{
  int bit = code(model.p1());
  model.update(bit);
  return bit;
}

}  // namespace spc
