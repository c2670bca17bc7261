import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // the service round-trip test trains a small model first
    testTimeout: 300_000,
    hookTimeout: 300_000,
  },
});
