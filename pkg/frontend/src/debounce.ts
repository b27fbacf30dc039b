/**
 * Delay a call until `ms` of quiet have passed since the last invocation.
 * Each new call cancels the pending one, so only the final value of a burst
 * is delivered.
 */
export function debounce<A>(fn: (value: A) => void, ms: number): (value: A) => void {
  let timer: ReturnType<typeof setTimeout> | undefined;
  return (value: A) => {
    if (timer !== undefined) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = undefined;
      fn(value);
    }, ms);
  };
}
