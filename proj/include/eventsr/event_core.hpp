#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "eventsr/tensor.hpp"

namespace eventsr
{

/// One brightness-change record. Timestamps are integer microseconds.
struct Event
{
  std::int64_t t = 0;
  int x = 0;
  int y = 0;
  int p = 1;  // -1 or +1

  friend bool operator==(const Event &, const Event &) = default;
};

/// Time-sorted events with sensor geometry. Build through validate_stream().
struct EventStream
{
  std::vector<Event> events;
  int width = 0;
  int height = 0;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
};

/// n rendered event frames forming a network input. frames is [1, n, H, W].
struct EventStack
{
  Tensor frames;
  /// Half-open [begin, end) index ranges into the source stream, one per frame.
  std::vector<std::pair<std::size_t, std::size_t>> frame_event_ranges;
  int n = 0;
  std::size_t events_per_frame = 0;  // 0 for time-based stacks
  std::pair<std::int64_t, std::int64_t> t_span{0, 0};

  int height() const { return frames.h(); }
  int width() const { return frames.w(); }
  /// Frame k (0-based) as a 1x1xHxW image.
  Tensor frame(int k) const;
};

struct RenderOptions
{
  /// Per-pixel signed polarity sums are clipped to [-clip, clip].
  double clip = 3.0;
};

struct StackOptions
{
  RenderOptions render;
  /// Frame k renders the prefix union [start, start + (k+1)·N_e) instead of
  /// the disjoint k-th slice.
  bool cumulative = false;
};

/// Checks bounds and polarity, then sorts stably by timestamp.
/// Throws InvalidEventError naming the first offending input index.
EventStream validate_stream(std::vector<Event> raw, int width, int height);

/// Signed polarity accumulation mapped to [0,1]:
/// v = 0.5 + clip(sum_p, -c, c) / (2c). Empty pixels are 0.5.
Tensor render_frame(std::span<const Event> events, int width, int height,
                    const RenderOptions & opts = {});

/// Stacking by number: frame k holds events [start + k·N_e, start + (k+1)·N_e).
/// Throws InsufficientEventsError when the stream is too short.
EventStack stack_by_number(const EventStream & stream, std::size_t events_per_frame, int n,
                           std::size_t start = 0, const StackOptions & opts = {});

/// Stacking by time: frame k holds events with t in [t0 + k·dt, t0 + (k+1)·dt).
EventStack stack_by_time(const EventStream & stream, std::int64_t window_dt, int n,
                         std::int64_t t0, const RenderOptions & opts = {});

/// Every non-overlapping stack_by_number stack of the stream, advancing the
/// start index by `stride` (default n·N_e when stride is 0).
std::vector<EventStack> stack_all(const EventStream & stream, std::size_t events_per_frame, int n,
                                  std::size_t stride = 0, const StackOptions & opts = {});

/// Population variance of the pixel values (variance focus measure).
double focus_variance(const Tensor & frame);

/// Mean focus_variance over the frames of a stack.
double stack_focus(const EventStack & stack);

/// Drops stacks whose stack_focus is below `min_variance`. A threshold of 0 keeps all.
std::vector<EventStack> filter_by_focus(std::vector<EventStack> stacks, double min_variance);

/// Rescales any frame that leaves [0,1] by its min/max; frames already in
/// range are untouched, which makes the operation idempotent.
EventStack normalize_stack(EventStack stack);

}  // namespace eventsr
