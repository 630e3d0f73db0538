#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include <unistd.h>

#include "oracles.hpp"

using namespace fastcycle;

namespace {

MessageEnvelope envelope(std::string topic, std::uint64_t seq, Nanos ts, PayloadHandle payload) {
  return MessageEnvelope{TopicName(topic), seq, ts, std::move(payload)};
}

std::string as_string(const std::vector<std::byte>& b) {
  return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

LogRecord random_record(std::mt19937_64& rng, std::size_t max_payload) {
  LogRecord r;
  const auto topic_len = std::uniform_int_distribution<std::size_t>(1, 255)(rng);
  for (std::size_t i = 0; i < topic_len; ++i) {
    r.topic.push_back(static_cast<char>(std::uniform_int_distribution<int>(1, 255)(rng)));
  }
  r.seq = rng();
  r.publish_ts_ns = static_cast<std::int64_t>(rng());
  r.payload.resize(std::uniform_int_distribution<std::size_t>(0, max_payload)(rng));
  for (auto& b : r.payload) b = static_cast<std::byte>(rng());
  return r;
}

}  // namespace

TEST(LogRecord, MinimalRecordIsTwentyEightBytes) {
  auto bytes = encode_record(envelope("a", 0, 0, Payload::from_string("")));
  ASSERT_EQ(bytes.size(), 28u);
  const std::string expected("FCL1\x01\x01\x00"
                             "\x00\x00\x00\x00\x00\x00\x00\x00"
                             "\x00\x00\x00\x00\x00\x00\x00\x00"
                             "\x00\x00\x00\x00"
                             "a",
                             28);
  EXPECT_EQ(as_string(bytes), expected);
}

TEST(LogRecord, FieldsAreLittleEndian) {
  auto bytes = encode_record(envelope("ab", 0x0102030405060708ull, -2, Payload::from_string("xyz")));
  const std::string expected("FCL1\x01\x02\x00"
                             "\x08\x07\x06\x05\x04\x03\x02\x01"
                             "\xfe\xff\xff\xff\xff\xff\xff\xff"
                             "\x03\x00\x00\x00"
                             "abxyz",
                             32);
  EXPECT_EQ(as_string(bytes), expected);
}

TEST(LogRecord, KilobytePayloadOnThreeByteTopic) {
  auto payload = Payload::build(1024, [](std::span<std::byte> b) { std::fill(b.begin(), b.end(), std::byte{1}); });
  EXPECT_EQ(encode_record(envelope("imu", 3, 9, payload)).size(), 1054u);
}

TEST(LogRecord, EncodingIsDeterministic) {
  auto e = envelope("cam", 5, 77, Payload::from_string("frame"));
  EXPECT_EQ(encode_record(e), encode_record(e));
}

TEST(LogRecord, BadMagic) {
  auto bytes = encode_record(envelope("a", 0, 0, Payload::from_string("")));
  bytes[3] = std::byte{'2'};
  try {
    decode_record(bytes);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.code(), ErrorCode::bad_magic);
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(LogRecord, UnsupportedVersion) {
  auto bytes = encode_record(envelope("a", 0, 0, Payload::from_string("")));
  bytes[4] = std::byte{9};
  try {
    decode_record(bytes);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.code(), ErrorCode::unsupported_version);
  }
}

TEST(LogRecord, TrailingGarbageIsNotConsumed) {
  auto bytes = encode_record(envelope("imu", 1, 2, Payload::from_string("hello")));
  const auto len = bytes.size();
  for (char c : std::string("garbage")) bytes.push_back(static_cast<std::byte>(c));
  auto d = decode_record(bytes);
  EXPECT_EQ(d.consumed, len);
  EXPECT_EQ(d.record.topic, "imu");
}

TEST(LogRecord, DeclaredPayloadLongerThanInputIsTruncated) {
  auto payload = Payload::build(100, [](std::span<std::byte> b) { std::fill(b.begin(), b.end(), std::byte{2}); });
  auto bytes = encode_record(envelope("t", 0, 0, payload));
  bytes.resize(kLogHeaderSize + 1 + 50);
  try {
    decode_record(bytes);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.code(), ErrorCode::truncated);
  }
}

TEST(LogRecord, EnvelopeRoundTrip) {
  auto e = envelope("lidar/front", 42, 123456789, Payload::from_string("points"));
  auto d = decode_record(encode_record(e));
  EXPECT_EQ(d.record.topic, e.topic.str());
  EXPECT_EQ(d.record.seq, e.seq);
  EXPECT_EQ(d.record.publish_ts_ns, e.publish_ts);
  EXPECT_EQ(as_string(d.record.payload), "points");
}

TEST(LogRecordProperty, RandomRecordsRoundTrip) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 200; ++i) {
    // Mostly small payloads, with a few near the 1 MB upper bound.
    const auto rec = random_record(rng, i % 20 == 0 ? (1u << 20) : 4096);
    auto bytes = encode_record(rec);
    ASSERT_EQ(bytes.size(), kLogHeaderSize + rec.topic.size() + rec.payload.size());
    auto d = decode_record(bytes);
    ASSERT_EQ(d.record, rec);
    ASSERT_EQ(d.consumed, bytes.size());
  }
}

TEST(Replay, EmptyStream) {
  std::istringstream in("");
  auto r = replay(in);
  EXPECT_TRUE(r.records.empty());
  EXPECT_FALSE(r.error);
}

TEST(Replay, RecordsComeBackInOrder) {
  std::mt19937_64 rng(32);
  std::vector<LogRecord> originals;
  std::string file;
  for (int i = 0; i < 50; ++i) {
    originals.push_back(random_record(rng, 512));
    file += as_string(encode_record(originals.back()));
  }
  std::istringstream in(file);
  auto r = replay(in);
  EXPECT_FALSE(r.error);
  EXPECT_EQ(r.records, originals);

  std::istringstream again(file);
  LogReader reader(again);
  std::size_t n = 0;
  for (const auto& rec : reader) EXPECT_EQ(rec, originals[n++]);
  EXPECT_EQ(n, originals.size());
}

TEST(Replay, CorruptThirdRecordStopsAtItsOffset) {
  std::string file;
  std::uint64_t third = 0;
  for (int i = 0; i < 5; ++i) {
    if (i == 2) third = file.size();
    file += as_string(encode_record(envelope("t", i, i, Payload::from_string(std::string(i + 1, 'p')))));
  }
  file[third] = 'X';
  std::istringstream in(file);
  auto r = replay(in);
  EXPECT_EQ(r.records.size(), 2u);
  ASSERT_TRUE(r.error);
  EXPECT_EQ(r.error->code(), ErrorCode::bad_magic);
  EXPECT_EQ(r.error->offset(), third);
}

TEST(Replay, TruncatedTailReportsOffset) {
  std::string file;
  file += as_string(encode_record(envelope("t", 0, 0, Payload::from_string("abc"))));
  const auto second = file.size();
  file += as_string(encode_record(envelope("t", 1, 0, Payload::from_string("abcdef")))).substr(0, 30);
  std::istringstream in(file);
  auto r = replay(in);
  EXPECT_EQ(r.records.size(), 1u);
  ASSERT_TRUE(r.error);
  EXPECT_EQ(r.error->code(), ErrorCode::truncated);
  EXPECT_EQ(r.error->offset(), second);
}

TEST(Logger, EmptyAllowlistIsRejected) {
  try {
    TopicFilter::allowlist({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_allowlist);
  }
}

TEST(Logger, AllModeRecordsEveryTopic) {
  Runtime rt;
  std::ostringstream sink;
  rt.registry().create_topic(TopicName("a"));
  auto logger = attach_logger(rt, TopicFilter::all(), sink);
  rt.start();
  for (int k = 0; k < 3; ++k) {
    rt.registry().publish(TopicName("a"), Payload::from_string("x"));
    rt.registry().publish(TopicName("b"), Payload::from_string("y"));  // created after attach
  }
  rt.stop();
  EXPECT_EQ(logger->records(), 6u);
  std::istringstream in(sink.str());
  EXPECT_EQ(replay(in).records.size(), 6u);
}

TEST(Logger, AllowlistFilters) {
  Runtime rt;
  std::ostringstream sink;
  auto logger = attach_logger(rt, TopicFilter::allowlist({TopicName("imu")}), sink);
  rt.start();
  rt.registry().publish(TopicName("imu"), Payload::from_string("i"));
  rt.registry().publish(TopicName("cam"), Payload::from_string("c"));
  rt.registry().publish(TopicName("imu"), Payload::from_string("i"));
  rt.stop();
  std::istringstream in(sink.str());
  auto records = replay(in).records;
  ASSERT_EQ(records.size(), 2u);
  for (auto& r : records) EXPECT_EQ(r.topic, "imu");
  EXPECT_EQ(records[0].seq, 0u);
  EXPECT_EQ(records[1].seq, 1u);
}

TEST(Logger, DoesNotDisturbOtherSubscribers) {
  auto run = [](bool with_logger) {
    Runtime rt;
    std::vector<std::uint64_t> seqs;
    std::ostringstream sink;
    rt.registry().subscribe(TopicName("t"), [&](const MessageEnvelope& e) { seqs.push_back(e.seq); });
    std::unique_ptr<Logger> logger;
    if (with_logger) logger = attach_logger(rt, TopicFilter::all(), sink, {QueueLimit::unbounded()});
    rt.start();
    for (int k = 0; k < 500; ++k) rt.registry().publish(TopicName("t"), Payload::from_string("m"));
    rt.stop();
    if (logger) {
      EXPECT_EQ(logger->records(), 500u);
    }
    return seqs;
  };
  EXPECT_EQ(run(false), run(true));
}

TEST(Logger, CompleteUnderUnboundedQueues) {
  Runtime rt;
  std::ostringstream sink;
  auto logger = attach_logger(rt, TopicFilter::all(), sink, {QueueLimit::unbounded()});
  rt.start();
  std::uint64_t published = 0;
  for (int k = 0; k < 3000; ++k) {
    rt.registry().publish(TopicName("t" + std::to_string(k % 7)), Payload::from_string("m"));
    ++published;
  }
  rt.stop();
  std::istringstream in(sink.str());
  auto r = replay(in);
  EXPECT_FALSE(r.error);
  EXPECT_EQ(r.records.size(), published);
  EXPECT_EQ(logger->dropped(), 0u);
}

TEST(Logger, ReadsPayloadInPlace) {
  TopicRegistry registry;
  std::ostringstream sink;
  auto logger = attach_logger(registry, TopicFilter::all(), std::make_shared<StreamSink>(sink));
  auto payload = Payload::from_string("zero copy");
  registry.publish(TopicName("t"), payload);
  auto ready = registry.take_ready();
  ASSERT_EQ(ready.size(), 1u);
  EXPECT_EQ(ready[0].envelope.payload.get(), payload.get());
  (*ready[0].callback)(ready[0].envelope);
  ready[0].group->release();
  registry.task_finished();
  EXPECT_EQ(logger->records(), 1u);
}

TEST(Logger, SplitFilesNeverCutRecords) {
  const auto dir = std::filesystem::temp_directory_path() / ("fastcycle_split_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  auto sink = std::make_shared<SplitFileSink>(dir / "run.fcl", 100);
  {
    TopicRegistry registry;
    auto logger = attach_logger(registry, TopicFilter::all(), sink);
    Broker broker(registry, BrokerConfig{1, NotifyWakeup{}, std::chrono::seconds(5)});
    broker.start();
    for (int k = 0; k < 10; ++k) registry.publish(TopicName("t"), Payload::from_string(std::string(30, 'p')));
    broker.stop(StopMode::drain);
    logger->flush();
  }
  std::size_t total = 0;
  for (const auto& f : sink->files()) {
    EXPECT_LE(std::filesystem::file_size(f), 100u);
    std::ifstream in(f, std::ios::binary);
    auto r = replay(in);
    EXPECT_FALSE(r.error) << f;
    total += r.records.size();
  }
  EXPECT_EQ(total, 10u);
  EXPECT_GE(sink->files().size(), 5u);
  std::filesystem::remove_all(dir);
}
