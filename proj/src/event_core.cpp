#include "eventsr/event_core.hpp"

#include <algorithm>
#include <stdexcept>

#include "eventsr/error.hpp"

namespace eventsr
{

Tensor EventStack::frame(int k) const
{
  if (k < 0 || k >= n) throw std::out_of_range("EventStack::frame index");
  Tensor out = Tensor::image(frames.h(), frames.w());
  const std::size_t plane = out.size();
  std::copy_n(frames.data.begin() + static_cast<std::ptrdiff_t>(plane * k), plane, out.data.begin());
  return out;
}

EventStream validate_stream(std::vector<Event> raw, int width, int height)
{
  if (width <= 0 || height <= 0) throw DataError("sensor geometry must be positive");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const Event & e = raw[i];
    if (e.x < 0 || e.x >= width || e.y < 0 || e.y >= height)
      throw InvalidEventError(i, "out of bounds");
    if (e.p != 1 && e.p != -1) throw InvalidEventError(i, "polarity must be -1 or +1");
    if (e.t < 0) throw InvalidEventError(i, "negative timestamp");
  }
  std::stable_sort(raw.begin(), raw.end(), [](const Event & a, const Event & b) { return a.t < b.t; });
  return EventStream{std::move(raw), width, height};
}

namespace
{

void accumulate(std::span<const Event> events, int width, double * plane)
{
  for (const Event & e : events) plane[static_cast<std::size_t>(e.y) * width + e.x] += e.p;
}

void map_to_unit(double * plane, std::size_t count, double clip)
{
  for (std::size_t i = 0; i < count; ++i)
    plane[i] = 0.5 + std::clamp(plane[i], -clip, clip) / (2.0 * clip);
}

}  // namespace

Tensor render_frame(std::span<const Event> events, int width, int height, const RenderOptions & opts)
{
  if (opts.clip <= 0.0) throw std::invalid_argument("render clip must be positive");
  Tensor out = Tensor::image(height, width, 0.0);
  accumulate(events, width, out.data.data());
  map_to_unit(out.data.data(), out.size(), opts.clip);
  return out;
}

EventStack stack_by_number(const EventStream & stream, std::size_t events_per_frame, int n,
                           std::size_t start, const StackOptions & opts)
{
  if (events_per_frame < 1) throw std::invalid_argument("events per frame must be >= 1");
  if (n < 1) throw std::invalid_argument("frame count must be >= 1");
  const std::size_t needed = start + static_cast<std::size_t>(n) * events_per_frame;
  if (needed > stream.size()) throw InsufficientEventsError(needed, stream.size());

  EventStack stack;
  stack.n = n;
  stack.events_per_frame = events_per_frame;
  stack.frames = Tensor({1, n, stream.height, stream.width}, 0.0);
  const std::size_t plane = static_cast<std::size_t>(stream.height) * stream.width;
  std::span<const Event> all(stream.events);
  for (int k = 0; k < n; ++k) {
    const std::size_t end = start + (k + 1) * events_per_frame;
    const std::size_t begin = opts.cumulative ? start : end - events_per_frame;
    double * out = stack.frames.data.data() + plane * k;
    accumulate(all.subspan(begin, end - begin), stream.width, out);
    map_to_unit(out, plane, opts.render.clip);
    stack.frame_event_ranges.emplace_back(begin, end);
  }
  stack.t_span = {stream.events[start].t, stream.events[needed - 1].t};
  return stack;
}

EventStack stack_by_time(const EventStream & stream, std::int64_t window_dt, int n, std::int64_t t0,
                         const RenderOptions & opts)
{
  if (window_dt <= 0) throw std::invalid_argument("window must be positive");
  if (n < 1) throw std::invalid_argument("frame count must be >= 1");
  EventStack stack;
  stack.n = n;
  stack.events_per_frame = 0;
  stack.frames = Tensor({1, n, stream.height, stream.width}, 0.0);
  const std::size_t plane = static_cast<std::size_t>(stream.height) * stream.width;
  auto by_time = [](const Event & e, std::int64_t t) { return e.t < t; };
  std::span<const Event> all(stream.events);
  for (int k = 0; k < n; ++k) {
    const std::int64_t lo = t0 + k * window_dt;
    const std::int64_t hi = lo + window_dt;
    auto b = std::lower_bound(stream.events.begin(), stream.events.end(), lo, by_time);
    auto e = std::lower_bound(b, stream.events.end(), hi, by_time);
    const auto begin = static_cast<std::size_t>(b - stream.events.begin());
    const auto end = static_cast<std::size_t>(e - stream.events.begin());
    double * out = stack.frames.data.data() + plane * k;
    accumulate(all.subspan(begin, end - begin), stream.width, out);
    map_to_unit(out, plane, opts.clip);
    stack.frame_event_ranges.emplace_back(begin, end);
  }
  stack.t_span = {t0, t0 + n * window_dt - 1};
  return stack;
}

std::vector<EventStack> stack_all(const EventStream & stream, std::size_t events_per_frame, int n,
                                  std::size_t stride, const StackOptions & opts)
{
  const std::size_t span = static_cast<std::size_t>(n) * events_per_frame;
  if (stride == 0) stride = span;
  std::vector<EventStack> out;
  for (std::size_t start = 0; start + span <= stream.size(); start += stride)
    out.push_back(stack_by_number(stream, events_per_frame, n, start, opts));
  return out;
}

double focus_variance(const Tensor & frame)
{
  if (frame.size() == 0) throw std::invalid_argument("focus_variance: empty frame");
  const auto [lo, hi] = std::minmax_element(frame.data.begin(), frame.data.end());
  if (*lo == *hi) return 0.0;
  const double count = static_cast<double>(frame.size());
  double mean = 0.0;
  for (double v : frame.data) mean += v;
  mean /= count;
  double var = 0.0;
  for (double v : frame.data) var += (v - mean) * (v - mean);
  return var / count;
}

double stack_focus(const EventStack & stack)
{
  double total = 0.0;
  for (int k = 0; k < stack.n; ++k) total += focus_variance(stack.frame(k));
  return total / stack.n;
}

std::vector<EventStack> filter_by_focus(std::vector<EventStack> stacks, double min_variance)
{
  if (min_variance <= 0.0) return stacks;
  std::erase_if(stacks, [&](const EventStack & s) { return stack_focus(s) < min_variance; });
  return stacks;
}

EventStack normalize_stack(EventStack stack)
{
  const std::size_t plane = static_cast<std::size_t>(stack.frames.h()) * stack.frames.w();
  for (int k = 0; k < stack.n; ++k) {
    auto first = stack.frames.data.begin() + static_cast<std::ptrdiff_t>(plane * k);
    auto last = first + static_cast<std::ptrdiff_t>(plane);
    const auto [lo, hi] = std::minmax_element(first, last);
    const double mn = *lo, mx = *hi;
    if (mn >= 0.0 && mx <= 1.0) continue;
    if (mx == mn) {
      std::fill(first, last, 0.5);
      continue;
    }
    for (auto it = first; it != last; ++it) *it = (*it - mn) / (mx - mn);
  }
  return stack;
}

}  // namespace eventsr
