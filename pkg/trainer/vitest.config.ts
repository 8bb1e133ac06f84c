import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // The acceptance test trains both networks and runs the full engine
    // evaluation on one CPU core; give it room.
    testTimeout: 2_400_000,
    hookTimeout: 600_000,
    fileParallelism: false,
  },
});
