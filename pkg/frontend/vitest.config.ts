import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    globalSetup: ["./test/global-setup.ts"],
    testTimeout: 30_000,
    hookTimeout: 180_000,
    // The live-service suite drives one shared service process; keep files
    // sequential so its match cache warms predictably.
    fileParallelism: false,
  },
});
