import { defineConfig } from "vitest/config";

// The integration file spawns the robot service and drives it in real time;
// keep files sequential so its timing is not starved by parallel workers.
export default defineConfig({
  test: {
    fileParallelism: false,
    testTimeout: 40000,
    hookTimeout: 30000,
  },
});
